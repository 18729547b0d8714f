//! Deterministic constructed scenes with planted changes.
//!
//! A scene is a mosaic of `TILE`-pixel land-cover tiles drawn from a small
//! palette, with mild per-pixel noise. Phase b repaints chosen tiles: to the
//! target colour (true changes) or to a different background colour
//! (changes the identification stage must reject). The noisy family adds a
//! global per-channel gain/offset to phase b and static target-coloured tiles
//! that exist in both phases.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{DatasetManifest, PairEntry};
use crate::formats;
use crate::identify::TextPrototypes;
use crate::imaging::{io, BBox, BinaryMask, Grid, Image};
use crate::pipeline::{pretty_json, PipelineConfig};
use crate::providers::{EmbeddingProviderSpec, FeatureProviderSpec, SegmentationProviderSpec};

pub const SIZE: usize = 256;
pub const TILE: usize = 32;
const TILES: usize = SIZE / TILE;

pub const TARGET_PROMPT: &str = "buildings";
pub const BACKGROUND_PROMPT: &str = "background";
pub const TARGET_ANCHOR: [f64; 3] = [0.9, 0.1, 0.1];
pub const BACKGROUND_ANCHOR: [f64; 3] = [0.5, 0.5, 0.5];

/// Roof colour painted into changed tiles.
const ROOF: [u8; 3] = [230, 25, 20];

/// Background land-cover colours: vegetation, water, bare soil, pavement.
const LAND: [[u8; 3]; 4] = [[52, 138, 50], [28, 66, 140], [152, 126, 88], [112, 112, 120]];

/// Background repaint pairs with a large colour shift (water -> soil,
/// vegetation -> pavement, soil -> water).
const PSEUDO: [(usize, usize); 3] = [(1, 2), (0, 3), (2, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// One planted target change.
    Clean,
    /// One target change and one background-coloured change.
    Mixed,
    /// Several target changes, background repaints, static roofs and
    /// radiometric jitter on phase b.
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_a: Image,
    pub image_b: Image,
    pub ground_truth: BinaryMask,
    /// Tiles `(row, col)` repainted with the target colour.
    pub target_tiles: Vec<(usize, usize)>,
    /// Tiles repainted with another background colour.
    pub pseudo_tiles: Vec<(usize, usize)>,
}

pub fn tile_box(t: (usize, usize)) -> BBox {
    BBox::new(t.0 * TILE, t.1 * TILE, (t.0 + 1) * TILE, (t.1 + 1) * TILE)
}

fn paint(colors: &Grid<[u8; 3]>, noise: i32, rng: &mut ChaCha8Rng) -> Image {
    let mut img = Image::filled(SIZE, SIZE, [0, 0, 0]);
    for r in 0..SIZE {
        for c in 0..SIZE {
            let base = colors.at(r / TILE, c / TILE);
            let px = base.map(|v| (v as i32 + rng.gen_range(-noise..=noise)).clamp(0, 255) as u8);
            img.set_pixel(r, c, px);
        }
    }
    img
}

/// Per-channel `v * gain + offset`, rounded half away from zero and clamped.
fn jitter(img: &mut Image, gain: [f64; 3], offset: [f64; 3]) {
    for px in img.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = (px[c] as f64 * gain[c] + offset[c]).round().clamp(0.0, 255.0) as u8;
        }
    }
}

pub fn render_scene(kind: SceneKind, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut colors_a = Grid::from_fn(TILES, TILES, |_, _| 0usize);
    for v in colors_a.data_mut() {
        *v = rng.gen_range(0..LAND.len());
    }
    let mut tiles: Vec<(usize, usize)> =
        (0..TILES).flat_map(|r| (0..TILES).map(move |c| (r, c))).collect();
    tiles.shuffle(&mut rng);
    let mut pick = tiles.into_iter();

    let (n_target, n_pseudo, n_static) = match kind {
        SceneKind::Clean => (1, 0, 0),
        SceneKind::Mixed => (1, 1, 0),
        SceneKind::Noisy => (rng.gen_range(2..=3), rng.gen_range(2..=3), rng.gen_range(2..=3)),
    };
    let target_tiles: Vec<_> = pick.by_ref().take(n_target).collect();
    let pseudo_tiles: Vec<_> = pick.by_ref().take(n_pseudo).collect();
    let static_tiles: Vec<_> = pick.by_ref().take(n_static).collect();

    let mut rgb_a = Grid::from_fn(TILES, TILES, |r, c| LAND[colors_a.at(r, c)]);
    for &(r, c) in &static_tiles {
        rgb_a.set(r, c, ROOF);
    }
    let mut rgb_b = rgb_a.clone();
    for &(r, c) in &target_tiles {
        rgb_b.set(r, c, ROOF);
    }
    for (i, &(r, c)) in pseudo_tiles.iter().enumerate() {
        let (from, to) = PSEUDO[i % PSEUDO.len()];
        rgb_a.set(r, c, LAND[from]);
        rgb_b.set(r, c, LAND[to]);
    }

    let noise = if kind == SceneKind::Noisy { 6 } else { 3 };
    let image_a = paint(&rgb_a, noise, &mut rng);
    let mut image_b = paint(&rgb_b, noise, &mut rng);
    if kind == SceneKind::Noisy {
        let gain = [(); 3].map(|_| rng.gen_range(0.9..1.1));
        let offset = [(); 3].map(|_| rng.gen_range(-12.0..12.0));
        jitter(&mut image_b, gain, offset);
    }

    let gt = Grid::from_fn(SIZE, SIZE, |r, c| target_tiles.contains(&(r / TILE, c / TILE)));
    Scene {
        image_a,
        image_b,
        ground_truth: crate::imaging::rle_encode(&gt),
        target_tiles,
        pseudo_tiles,
    }
}

pub fn prototypes() -> TextPrototypes {
    TextPrototypes {
        target: TARGET_PROMPT.into(),
        background: BACKGROUND_PROMPT.into(),
    }
}

pub fn anchors() -> BTreeMap<String, [f64; 3]> {
    [
        (TARGET_PROMPT.to_string(), TARGET_ANCHOR),
        (BACKGROUND_PROMPT.to_string(), BACKGROUND_ANCHOR),
    ]
    .into_iter()
    .collect()
}

/// Config for the constructed scenes: synthetic providers with tiles that
/// match the scene grid, and an angle interval suited to three-channel
/// colour features, whose cosines are all positive.
pub fn fixture_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::new(
        SegmentationProviderSpec::SyntheticGrid { tile: TILE },
        FeatureProviderSpec::Synthetic { blur_radius: 2 },
        EmbeddingProviderSpec::SyntheticColor { anchors: anchors() },
        prototypes(),
    );
    cfg.act.params.theta_min = 150.0;
    cfg.act.params.theta_max = 175.0;
    // Planted changes use colours phase a never shows, so a global histogram
    // match would happily paint them out. Keep the correction small.
    cfg.ara.params.tau_max = 0.1;
    cfg
}

fn noisy_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub seed: u64,
    pub pairs: Vec<String>,
    pub files: usize,
}

fn write_manifest(dir: &Path, name: &str, pairs: &[PairEntry]) -> Result<()> {
    let m = DatasetManifest {
        prompts: Some("prompts.json".into()),
        pairs: pairs.to_vec(),
    };
    formats::write_bytes(&dir.join(name), &pretty_json(&m))
}

/// Write the fixture tree under `dir`. Identical seeds give byte-identical
/// trees.
///
/// ```text
/// config.json prompts.json anchors.json
/// manifest.json manifest_clean.json manifest_mixed.json manifest_noisy.json
/// pairs/<id>/{a.png, b.png, gt.png}
/// ```
pub fn write_fixtures(dir: &Path, seed: u64, noisy_count: usize) -> Result<SynthSummary> {
    std::fs::create_dir_all(dir.join("pairs")).map_err(|e| Error::io(dir, e))?;
    let mut files = 0;
    formats::write_bytes(&dir.join("config.json"), &fixture_config().to_json())?;
    formats::write_bytes(&dir.join("prompts.json"), &pretty_json(&prototypes()))?;
    formats::write_bytes(&dir.join("anchors.json"), &pretty_json(&anchors()))?;
    files += 3;

    let mut jobs = vec![
        ("clean".to_string(), SceneKind::Clean, seed),
        ("mixed".to_string(), SceneKind::Mixed, seed),
    ];
    for i in 0..noisy_count {
        jobs.push((format!("noisy-{i:02}"), SceneKind::Noisy, noisy_seed(seed, i)));
    }
    let mut groups: BTreeMap<&str, Vec<PairEntry>> = BTreeMap::new();
    let mut ids = Vec::new();
    for (id, kind, s) in &jobs {
        let scene = render_scene(*kind, *s);
        let rel = Path::new("pairs").join(id);
        let pair_dir = dir.join(&rel);
        std::fs::create_dir_all(&pair_dir).map_err(|e| Error::io(&pair_dir, e))?;
        io::write_image(&scene.image_a, &pair_dir.join("a.png"))?;
        io::write_image(&scene.image_b, &pair_dir.join("b.png"))?;
        io::write_mask_png(&scene.ground_truth, &pair_dir.join("gt.png"))?;
        files += 3;
        let entry = PairEntry {
            id: id.clone(),
            image_a: rel.join("a.png"),
            image_b: rel.join("b.png"),
            ground_truth: rel.join("gt.png"),
        };
        let group = match kind {
            SceneKind::Clean => "clean",
            SceneKind::Mixed => "mixed",
            SceneKind::Noisy => "noisy",
        };
        groups.entry(group).or_default().push(entry);
        ids.push(id.clone());
    }
    let mut all = Vec::new();
    for group in ["clean", "mixed", "noisy"] {
        if let Some(pairs) = groups.get(group) {
            write_manifest(dir, &format!("manifest_{group}.json"), pairs)?;
            files += 1;
            all.extend(pairs.iter().cloned());
        }
    }
    write_manifest(dir, "manifest.json", &all)?;
    files += 1;
    Ok(SynthSummary {
        seed,
        pairs: ids,
        files,
    })
}
