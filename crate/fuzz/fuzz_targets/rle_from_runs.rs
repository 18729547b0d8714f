#![no_main]

use adaptcd::imaging::{connected_components_8, rle_decode, rle_encode, BinaryMask};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|input: (u8, u8, Vec<u16>)| {
    let (h, w, runs) = input;
    let (h, w) = (h as usize % 64 + 1, w as usize % 64 + 1);
    let runs: Vec<u32> = runs.into_iter().map(u32::from).collect();
    if let Ok(mask) = BinaryMask::from_runs(h, w, runs) {
        let grid = rle_decode(&mask).expect("validated runs decode");
        assert_eq!(rle_encode(&grid).count(), mask.count());
        let labels = connected_components_8(&mask);
        assert_eq!(labels.components.iter().map(|c| c.area).sum::<usize>(), mask.count());
    }
});
