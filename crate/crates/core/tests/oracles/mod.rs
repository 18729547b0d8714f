//! Reference implementations written independently of the library, and the
//! randomized suites that compare the two. Shared by the integration tests
//! and the CLI acceptance run (which includes this file by path).
#![allow(dead_code)]

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use adaptcd::act::{self, decision_cut, otsu_from_histogram};
use adaptcd::ara::{self, AraConfig};
use adaptcd::formats::{dfm, embeddings, inspect::FileKind, masks};
use adaptcd::identify::{adaptive_conf_threshold, connected_filter, AcfConfig};
use adaptcd::imaging::{
    connected_components_8, rle_decode, rle_encode, BinaryMask, DenseFeatureMap, Grid, Image,
};
use adaptcd::pipeline;
use adaptcd::synth::{self, SceneKind};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one suite.
#[derive(Debug)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Check {
    fn new(pass: bool, detail: String, start: Instant) -> Check {
        Check {
            pass,
            detail,
            elapsed: start.elapsed(),
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- random data

/// Blocky image: a random base distribution per channel plus a few
/// rectangles in other colours.
pub fn random_image(r: &mut impl Rng, h: usize, w: usize) -> Image {
    let mean: [f64; 3] = std::array::from_fn(|_| r.gen_range(30.0..220.0));
    let spread: [f64; 3] = std::array::from_fn(|_| r.gen_range(2.0..50.0));
    let mut img = Image::filled(h, w, [0, 0, 0]);
    for row in 0..h {
        for col in 0..w {
            let px = std::array::from_fn(|c| {
                let u: f64 = (0..3).map(|_| r.gen_range(-1.0..1.0)).sum::<f64>() / 3.0;
                (mean[c] + spread[c] * u * 1.7).round().clamp(0.0, 255.0) as u8
            });
            img.set_pixel(row, col, px);
        }
    }
    for _ in 0..r.gen_range(0..5) {
        let (r0, c0) = (r.gen_range(0..h), r.gen_range(0..w));
        let (r1, c1) = (r.gen_range(r0 + 1..=h), r.gen_range(c0 + 1..=w));
        let rgb: [u8; 3] = r.gen();
        for row in r0..r1 {
            for col in c0..c1 {
                img.set_pixel(row, col, rgb);
            }
        }
    }
    img
}

pub fn random_grid(r: &mut impl Rng, h: usize, w: usize) -> Grid<bool> {
    let density = r.gen_range(0.02..0.75);
    let mut g = Grid::from_fn(h, w, |_, _| r.gen_bool(density));
    // Some solid blocks so components are not all specks.
    for _ in 0..r.gen_range(0..6) {
        let (r0, c0) = (r.gen_range(0..h), r.gen_range(0..w));
        let (r1, c1) = (
            r.gen_range(r0 + 1..=h.min(r0 + 40)),
            r.gen_range(c0 + 1..=w.min(c0 + 40)),
        );
        let fill = r.gen_bool(0.7);
        for row in r0..r1 {
            for col in c0..c1 {
                g.set(row, col, fill);
            }
        }
    }
    g
}

fn random_histogram(r: &mut impl Rng) -> [u64; 256] {
    let mut h = [0u64; 256];
    match r.gen_range(0..4) {
        0 => h.iter_mut().for_each(|c| *c = r.gen_range(0..1000)),
        1 => {
            for _ in 0..r.gen_range(1..8) {
                h[r.gen_range(0..256)] += r.gen_range(1..2_000_000);
            }
        }
        2 => {
            // Two bumps, as from a bimodal difference map.
            for _ in 0..65_536 {
                let centre = if r.gen_bool(0.8) { 40.0 } else { 180.0 };
                let u: f64 = (0..4).map(|_| r.gen_range(-1.0..1.0)).sum();
                h[(centre + u * 12.0).clamp(0.0, 255.0) as usize] += 1;
            }
        }
        _ => {
            for c in h.iter_mut() {
                if r.gen_bool(0.1) {
                    *c = r.gen_range(0..u32::MAX as u64);
                }
            }
        }
    }
    if h.iter().all(|&c| c == 0) {
        h[r.gen_range(0..256)] = 1;
    }
    h
}

// -------------------------------------------------------------------- oracles

/// Exhaustive Otsu over bins with exact big-integer comparison. Returns the
/// smallest bin index `k` maximising the between-class variance of the
/// split `[0..=k] | [k+1..]`, or `None` with fewer than two occupied bins.
pub fn brute_otsu(hist: &[u64; 256]) -> Option<usize> {
    let n: u128 = hist.iter().map(|&c| c as u128).sum();
    let s: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let mut best: Option<(usize, BigUint, BigUint)> = None;
    for k in 0..255 {
        let n0: u128 = hist[..=k].iter().map(|&c| c as u128).sum();
        let s0: u128 = hist[..=k]
            .iter()
            .enumerate()
            .map(|(i, &c)| i as u128 * c as u128)
            .sum();
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // N^2 * w0 * w1 * (mu0 - mu1)^2 = (N*s0 - n0*S)^2 / (n0*n1)
        let (a, b) = (BigUint::from(n) * s0, BigUint::from(n0) * s);
        let d = if a > b { a - b } else { b - a };
        let num = &d * &d;
        let den = BigUint::from(n0) * n1;
        let better = match &best {
            None => true,
            Some((_, bn, bd)) => &num * bd > bn * &den,
        };
        if better {
            best = Some((k, num, den));
        }
    }
    best.map(|(k, _, _)| k)
}

/// 8-connected BFS flood fill; labels in raster order of first pixel.
pub fn bfs_labels(g: &Grid<bool>) -> Vec<u32> {
    let (h, w) = g.dims();
    let mut labels = vec![0u32; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !g.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if g.data()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    labels
}

/// Linear-interpolation percentile via selection rather than a full sort.
pub fn percentile_oracle(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let h = (n - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let f = h - lo as f64;
    let mut v = values.to_vec();
    let (_, &mut a, rest) = v.select_nth_unstable_by(lo, |x, y| x.partial_cmp(y).unwrap());
    let b = rest.iter().cloned().fold(f64::INFINITY, f64::min);
    if f == 0.0 || rest.is_empty() {
        a
    } else {
        (1.0 - f) * a + f * b
    }
}

/// Largest per-channel gap between two empirical CDFs.
pub fn ks_distance(x: &Image, y: &Image) -> f64 {
    let mut worst = 0.0f64;
    for c in 0..3 {
        let (mut hx, mut hy) = ([0f64; 256], [0f64; 256]);
        for px in x.data().chunks_exact(3) {
            hx[px[c] as usize] += 1.0;
        }
        for px in y.data().chunks_exact(3) {
            hy[px[c] as usize] += 1.0;
        }
        let (nx, ny) = ((x.data().len() / 3) as f64, (y.data().len() / 3) as f64);
        let (mut cx, mut cy) = (0.0, 0.0);
        for v in 0..256 {
            cx += hx[v];
            cy += hy[v];
            worst = worst.max((cx / nx - cy / ny).abs());
        }
    }
    worst
}

// --------------------------------------------------------------------- suites

pub fn otsu_suite(cases: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut mismatches = Vec::new();
    for case in 0..cases {
        let h = random_histogram(&mut r);
        let got = otsu_from_histogram(&h).unwrap();
        let want = brute_otsu(&h);
        let agree = match want {
            None => got.degenerate,
            Some(k) => {
                !got.degenerate && got.cut_bin == k && got.threshold == (k + 1) as f64 / 256.0
            }
        };
        if !agree {
            mismatches.push(case);
        }
    }
    let elapsed = start.elapsed();
    Check::new(
        mismatches.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "{}/{cases} agree with exhaustive argmax, first mismatch {:?}, {:.2}s",
            cases - mismatches.len(),
            mismatches.first(),
            elapsed.as_secs_f64()
        ),
        start,
    )
}

pub fn components_suite(cases: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut bad = 0usize;
    for _ in 0..cases {
        let g = random_grid(&mut r, 128, 128);
        let labeling = connected_components_8(&rle_encode(&g));
        let want = bfs_labels(&g);
        let mut ok = labeling.labels.data() == want.as_slice();
        let k = want.iter().copied().max().unwrap_or(0) as usize;
        ok &= labeling.count() == k;
        for comp in &labeling.components {
            let pixels: Vec<usize> = (0..want.len()).filter(|&i| want[i] == comp.label).collect();
            ok &= comp.pixels == pixels && comp.area == pixels.len();
        }
        bad += usize::from(!ok);
    }
    let elapsed = start.elapsed();
    Check::new(
        bad == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{}/{cases} labelings equal BFS flood fill, {:.2}s",
            cases - bad,
            elapsed.as_secs_f64()
        ),
        start,
    )
}

/// Transfer tables are nondecreasing in every channel for every pair.
pub fn ara_monotonicity(images: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut violations = 0usize;
    for _ in 0..images {
        let (h, w) = (r.gen_range(8..40), r.gen_range(8..40));
        let src = random_image(&mut r, h, w);
        let reference = random_image(&mut r, h, w);
        let tables = ara::transfer_tables(&src, &reference).unwrap();
        for t in &tables {
            violations += t.windows(2).filter(|p| p[0] > p[1]).count();
        }
        // The applied mapping preserves pixel order within each channel.
        let out = ara::radiometric_transfer(&src, &reference).unwrap();
        for c in 0..3 {
            let mut pairs: Vec<(u8, u8)> = src
                .data()
                .chunks_exact(3)
                .zip(out.data().chunks_exact(3))
                .map(|(s, o)| (s[c], o[c]))
                .collect();
            pairs.sort();
            violations += pairs.windows(2).filter(|p| p[0].1 > p[1].1).count();
        }
    }
    Check::new(
        violations == 0,
        format!("{violations} order violations over {images} images x 3 channels x 256 levels"),
        start,
    )
}

fn brighten(img: &Image, gain: f64, offset: f64) -> Image {
    let data = img
        .data()
        .iter()
        .map(|&v| (v as f64 * gain + offset).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::new(img.height(), img.width(), data).unwrap()
}

/// Aligning a globally brightened copy back onto the original shrinks the
/// KS distance. The strict-decrease population brightens without clipping;
/// a second population saturates part of the range, which destroys the
/// information needed to undo it, so there only non-increase is required.
pub fn ara_ks_reduction(cases: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let (mut strict, mut increased, mut saturated_strict) = (0usize, 0usize, 0usize);
    let mut ks = |a: &Image, b: &Image| {
        let before = ks_distance(a, b);
        let after = ks_distance(a, &ara::align(a, b, &AraConfig::default()).unwrap().aligned);
        increased += usize::from(after > before);
        after < before
    };
    for _ in 0..cases {
        let (gain, offset) = (r.gen_range(1.05..1.3), r.gen_range(4.0..30.0));
        let raw = random_image(&mut r, 32, 32);
        let top = (255.0 - offset) / gain;
        let a = Image::new(
            32,
            32,
            raw.data().iter().map(|&v| (v as f64 * top / 255.0).floor() as u8).collect(),
        )
        .unwrap();
        strict += usize::from(ks(&a, &brighten(&a, gain, offset)));

        let a = random_image(&mut r, 32, 32);
        let b = brighten(&a, r.gen_range(1.05..1.4), r.gen_range(4.0..40.0));
        saturated_strict += usize::from(ks(&a, &b));
    }
    let pass = increased == 0 && strict * 100 >= cases * 99;
    Check::new(
        pass,
        format!(
            "strict decrease {strict}/{cases} (clipping-free), {saturated_strict}/{cases} \
             (saturating); increases {increased}/{}",
            2 * cases
        ),
        start,
    )
}

/// Every aligned pixel is the rounded convex blend of transferred and
/// original, recomputed with exact integer arithmetic.
pub fn ara_convexity(cases: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut bad = 0usize;
    let mut pixels = 0usize;
    for _ in 0..cases {
        let a = random_image(&mut r, 24, 24);
        let b = random_image(&mut r, 24, 24);
        // tau = q/64 keeps the blend weight an exact dyadic rational.
        let q: i64 = r.gen_range(1..=64);
        let cfg = AraConfig { tau_max: q as f64 / 64.0 };
        let res = ara::align(&a, &b, &cfg).unwrap();
        let m = res
            .transferred
            .data()
            .iter()
            .zip(b.data())
            .map(|(&t, &o)| (t as i64 - o as i64).abs())
            .max()
            .unwrap();
        for ((&t, &o), &got) in res.transferred.data().iter().zip(b.data()).zip(res.aligned.data()) {
            pixels += 1;
            let (t, o, got) = (t as i64, o as i64, got as i64);
            // alpha = min(1, (q/64) * 255 / m) = num/den
            let (num, den) = if m == 0 || q * 255 >= 64 * m { (1, 1) } else { (q * 255, 64 * m) };
            // value = o + alpha (t - o); round half away from zero.
            let x = o * den + num * (t - o);
            let want = (2 * x + den).div_euclid(2 * den);
            let lo = t.min(o);
            let hi = t.max(o);
            bad += usize::from(got != want || got < lo || got > hi);
        }
    }
    Check::new(
        bad == 0,
        format!("{bad} of {pixels} pixels off the exact convex blend"),
        start,
    )
}

pub fn decision_identity() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..=1800 {
        let theta = i as f64 / 10.0;
        worst = worst.max((decision_cut(theta) + theta.to_radians().cos()).abs());
    }
    Check::new(
        worst < 1e-12,
        format!("max |cos(180-theta) + cos(theta)| = {worst:.2e} over 1801 angles"),
        start,
    )
}

/// Raising theta never drops a candidate.
pub fn candidate_monotonicity(scenes: usize, seed: u64) -> Check {
    let start = Instant::now();
    let cfg = synth::fixture_config();
    let mut violations = 0usize;
    for i in 0..scenes {
        let kind = [SceneKind::Noisy, SceneKind::Mixed, SceneKind::Clean][i % 3];
        let scene = synth::render_scene(kind, seed + i as u64);
        let out = pipeline::run(&scene.image_a, &scene.image_b, &cfg).unwrap();
        let mut prev: Vec<usize> = Vec::new();
        for step in 0..=360 {
            let ids = act::select_by_cut(&out.scores, decision_cut(step as f64 / 2.0)).ids();
            violations += prev.iter().filter(|id| !ids.contains(id)).count();
            prev = ids;
        }
    }
    Check::new(
        violations == 0,
        format!("{violations} candidates lost as theta rose, {scenes} scenes"),
        start,
    )
}

fn random_acf(r: &mut impl Rng) -> AcfConfig {
    let lo = r.gen_range(0.0..0.9);
    AcfConfig {
        percentile: r.gen_range(0.0..=100.0),
        lambda: r.gen_range(0.5..3.0),
        clip_lo: lo,
        clip_hi: r.gen_range(lo..1.0),
        mu_min: r.gen_range(0.5..0.95),
        gamma: r.gen_range(0.005..0.4),
        a_min: r.gen_range(1..300),
        ..AcfConfig::default()
    }
}

pub fn acf_threshold_oracle(cases: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let cfg = random_acf(&mut r);
        let n = r.gen_range(1..200);
        let pos: Vec<f64> = (0..n).map(|_| r.gen_range(0.5000001..=1.0)).collect();
        let got = adaptive_conf_threshold(&pos, &cfg).unwrap();
        let base = percentile_oracle(&pos, cfg.percentile) / cfg.lambda;
        let want = if base < cfg.clip_lo {
            cfg.clip_lo
        } else if base > cfg.clip_hi {
            cfg.clip_hi
        } else {
            base
        };
        worst = worst.max((got - want).abs());
    }
    Check::new(
        worst < 1e-9,
        format!("max |tau - oracle| = {worst:.2e} over {cases} sets"),
        start,
    )
}

/// Every region the filter keeps passes the area, mean and spread gates when
/// recomputed from scratch, and every region it drops fails one.
pub fn acf_gate_audit(runs: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let (mut violations, mut kept, mut dropped) = (0usize, 0usize, 0usize);
    let (h, w) = (64, 64);
    for _ in 0..runs {
        let cfg = random_acf(&mut r);
        let masks: Vec<(BinaryMask, f64)> = (0..r.gen_range(1..12))
            .map(|_| {
                let (r0, c0) = (r.gen_range(0..h), r.gen_range(0..w));
                let (r1, c1) = (r.gen_range(r0 + 1..=h), r.gen_range(c0 + 1..=w));
                let g = Grid::from_fn(h, w, |y, x| (r0..r1).contains(&y) && (c0..c1).contains(&x));
                (rle_encode(&g), r.gen_range(0.5..=1.0))
            })
            .collect();
        let refs: Vec<(&BinaryMask, f64)> = masks.iter().map(|(m, p)| (m, *p)).collect();
        let (change, _) = connected_filter(&refs, (h, w), &cfg).unwrap();

        let mut conf = vec![0.0f64; h * w];
        let mut union = Grid::filled(h, w, false);
        for (m, p) in &masks {
            let g = rle_decode(m).unwrap();
            for (i, &on) in g.data().iter().enumerate() {
                if on {
                    conf[i] = conf[i].max(*p);
                    union.data_mut()[i] = true;
                }
            }
        }
        let out = rle_decode(&change.mask).unwrap();
        let labels = bfs_labels(&union);
        for label in 1..=labels.iter().copied().max().unwrap_or(0) {
            let px: Vec<usize> = (0..h * w).filter(|&i| labels[i] == label).collect();
            let n = px.len() as f64;
            let mean = px.iter().map(|&i| conf[i]).sum::<f64>() / n;
            let var = px.iter().map(|&i| (conf[i] - mean).powi(2)).sum::<f64>() / n;
            let cv = var.sqrt() / mean;
            // Tolerate summation-order noise right at the gate.
            let eps = 1e-12;
            let passes = px.len() >= cfg.a_min && mean >= cfg.mu_min - eps && cv < cfg.gamma + eps;
            let fails = px.len() < cfg.a_min || mean < cfg.mu_min + eps || cv >= cfg.gamma - eps;
            let retained = px.iter().all(|&i| out.data()[i]);
            let removed = px.iter().all(|&i| !out.data()[i]);
            if retained {
                kept += 1;
                violations += usize::from(!passes);
            } else if removed {
                dropped += 1;
                violations += usize::from(!fails);
            } else {
                violations += 1;
            }
        }
        // Nothing outside the union may appear.
        violations += (0..h * w).filter(|&i| out.data()[i] && !union.data()[i]).count();
    }
    Check::new(
        violations == 0,
        format!("{violations} violations; {kept} regions kept, {dropped} dropped over {runs} runs"),
        start,
    )
}

/// Accepted candidate ids only grow with lambda.
pub fn acf_lambda_monotonicity(scenes: usize, seed: u64) -> Check {
    let start = Instant::now();
    let lambdas = [0.6, 0.8, 1.0, 1.2, 1.5, 2.0, 3.0];
    let mut violations = 0usize;
    let mut sizes = Vec::new();
    for i in 0..scenes {
        let scene = synth::render_scene(SceneKind::Noisy, seed + i as u64);
        let mut prev: Vec<usize> = Vec::new();
        for &lambda in &lambdas {
            let mut cfg = synth::fixture_config();
            // A soft temperature spreads the probabilities out.
            cfg.acf.params.softmax_temperature = 8.0;
            cfg.acf.params.clip_lo = 0.5;
            cfg.acf.params.lambda = lambda;
            let out = pipeline::run(&scene.image_a, &scene.image_b, &cfg).unwrap();
            let ids = out.identification.accepted;
            violations += prev.iter().filter(|id| !ids.contains(id)).count();
            sizes.push(ids.len());
            prev = ids;
        }
    }
    Check::new(
        violations == 0,
        format!(
            "{violations} accepted ids lost as lambda rose, {scenes} scenes x {} lambdas, sizes {}..{}",
            lambdas.len(),
            sizes.iter().min().unwrap_or(&0),
            sizes.iter().max().unwrap_or(&0)
        ),
        start,
    )
}

fn random_dfm(r: &mut impl Rng) -> DenseFeatureMap {
    let (c, h, w) = (r.gen_range(1..6), r.gen_range(1..20), r.gen_range(1..20));
    let data = (0..c * h * w)
        .map(|_| match r.gen_range(0..10) {
            0 => 0.0,
            1 => -0.0,
            2 => f32::MAX,
            3 => f32::MIN_POSITIVE / 4.0,
            _ => r.gen_range(-1e6f32..1e6),
        })
        .collect();
    DenseFeatureMap::new(c, h, w, data).unwrap()
}

fn random_masks(r: &mut impl Rng) -> masks::MaskManifest {
    let (h, w) = (r.gen_range(1..40), r.gen_range(1..40));
    masks::MaskManifest {
        height: h,
        width: w,
        instances: (0..r.gen_range(0..6)).map(|_| rle_encode(&random_grid(r, h, w))).collect(),
    }
}

fn random_embeddings(r: &mut impl Rng) -> embeddings::EmbeddingManifest {
    let dim = r.gen_range(1..16);
    let mut m = embeddings::EmbeddingManifest::new(dim);
    for i in 0..r.gen_range(0..8) {
        let v: Vec<f32> = (0..dim).map(|_| r.gen_range(-1.0f32..1.0) / 3.0).collect();
        let key = if i % 3 == 0 {
            embeddings::text_key(&format!("prompt {i}"))
        } else {
            embeddings::mask_key(i * 7)
        };
        m.insert(key, v).unwrap();
    }
    m
}

/// write -> read -> write is byte-identical for every provider format.
pub fn format_roundtrips(cases: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let mut bad = Vec::new();
    for i in 0..cases {
        let b = dfm::encode(&random_dfm(&mut r));
        if dfm::encode(&dfm::decode(&b).unwrap()) != b {
            bad.push(format!("dfm #{i}"));
        }
        let b = masks::encode(&random_masks(&mut r));
        if masks::encode(&masks::decode(&b).unwrap()) != b {
            bad.push(format!("masks #{i}"));
        }
        let b = embeddings::encode(&random_embeddings(&mut r));
        if embeddings::encode(&embeddings::decode(&b).unwrap()) != b {
            bad.push(format!("emb #{i}"));
        }
    }
    Check::new(
        bad.is_empty(),
        format!("{} of {} byte-identical, failures {:?}", 3 * cases - bad.len(), 3 * cases, bad),
        start,
    )
}

/// A deliberately broken provider file and the invariant it must be
/// rejected for.
pub struct Corruption {
    pub name: &'static str,
    pub file_name: &'static str,
    pub kind: FileKind,
    pub bytes: Vec<u8>,
    pub expect: &'static str,
}

fn dfm_bytes(c: u32, h: u32, w: u32, values: &[f32]) -> Vec<u8> {
    let mut b = b"DFM1".to_vec();
    for v in [c, h, w] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    for v in values {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn canonical_corruptions() -> Vec<Corruption> {
    let good = dfm_bytes(2, 2, 2, &[0.5; 8]);
    let c = |name, file_name, kind, bytes: Vec<u8>, expect| Corruption {
        name,
        file_name,
        kind,
        bytes,
        expect,
    };
    vec![
        c("dfm truncated payload", "trunc.dfm", FileKind::Dfm, good[..good.len() - 3].to_vec(), "payload length mismatch"),
        c("dfm wrong magic", "magic.dfm", FileKind::Dfm, [b"DFM2".as_slice(), &good[4..]].concat(), "bad magic"),
        c("dfm short header", "header.dfm", FileKind::Dfm, good[..10].to_vec(), "truncated header"),
        c("dfm zero channels", "zero.dfm", FileKind::Dfm, dfm_bytes(0, 2, 2, &[]), "zero dimension"),
        c("dfm NaN value", "nan.dfm", FileKind::Dfm, dfm_bytes(1, 1, 2, &[0.0, f32::NAN]), "non-finite value"),
        c(
            "masks run-sum mismatch",
            "sum.masks.json",
            FileKind::Masks,
            br#"{"height":2,"width":2,"instances":[{"id":0,"rle":[4]},{"id":1,"rle":[1,2]}]}"#.to_vec(),
            "instance id 1: malformed mask: run-sum 3",
        ),
        c(
            "masks consecutive zero runs",
            "zeros.masks.json",
            FileKind::Masks,
            br#"{"height":2,"width":2,"instances":[{"id":0,"rle":[0,0,4]}]}"#.to_vec(),
            "two consecutive zero-length runs",
        ),
        c(
            "masks duplicate id",
            "dup.masks.json",
            FileKind::Masks,
            br#"{"height":1,"width":2,"instances":[{"id":0,"rle":[2]},{"id":0,"rle":[2]}]}"#.to_vec(),
            "duplicate id",
        ),
        c(
            "emb length != dim",
            "len.emb.json",
            FileKind::Embeddings,
            br#"{"dim":3,"entries":{"mask:0":[1.0,0.0]}}"#.to_vec(),
            "length 2 != dim 3",
        ),
        c(
            "emb bad key",
            "key.emb.json",
            FileKind::Embeddings,
            br#"{"dim":1,"entries":{"region 4":[1.0]}}"#.to_vec(),
            "key must be mask:<id> or text:<string>",
        ),
    ]
}

pub fn corruption_suite() -> Check {
    let start = Instant::now();
    let mut misses = Vec::new();
    let all = canonical_corruptions();
    for c in &all {
        match adaptcd::formats::inspect::inspect_bytes(c.kind, &c.bytes) {
            Err(e) if e.to_string().contains(c.expect) => {}
            other => misses.push(format!("{}: {:?}", c.name, other.map(|_| "accepted"))),
        }
    }
    Check::new(
        misses.is_empty(),
        format!("{}/{} rejected with the named invariant {misses:?}", all.len() - misses.len(), all.len()),
        start,
    )
}
