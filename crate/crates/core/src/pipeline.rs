//! End-to-end orchestration: alignment, segmentation, feature comparison,
//! identification, with per-stage ablation switches and optional dumps of
//! every intermediate product.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::act::{self, ActConfig, CandidateSet, DifferenceMap, RegionScore, ThresholdBundle};
use crate::ara::{self, AraConfig, AraResult};
use crate::error::{Error, Result};
use crate::formats::{self, dfm, masks::MaskManifest};
use crate::identify::{self, AcfConfig, Identification, TextPrototypes};
use crate::imaging::{bilinear_upsample, io, DenseFeatureMap, Image, MaskSet, Phase};
use crate::providers::{
    EmbeddingProviderSpec, Embedder, FeatureExtractor, FeatureProviderSpec, Segmenter,
    SegmentationProviderSpec,
};

/// Placeholder substituted with the dataset pair id in file-provider paths.
pub const PAIR_PLACEHOLDER: &str = "{pair}";

fn yes() -> bool {
    true
}

/// A stage's parameters plus its on/off switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage<T> {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub params: T,
}

impl<T: Default> Default for Stage<T> {
    fn default() -> Self {
        Stage {
            enabled: true,
            params: T::default(),
        }
    }
}

fn default_fixed_percentile() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub ara: Stage<AraConfig>,
    #[serde(default)]
    pub act: Stage<ActConfig>,
    #[serde(default)]
    pub acf: Stage<AcfConfig>,
    /// Percentile of the similarity distribution used as the cut when ACT is
    /// off.
    #[serde(default = "default_fixed_percentile")]
    pub fixed_percentile: f64,
    pub segmentation: SegmentationProviderSpec,
    pub features: FeatureProviderSpec,
    pub embedding: EmbeddingProviderSpec,
    /// May be left out when prompts are supplied separately.
    #[serde(default)]
    pub prototypes: Option<TextPrototypes>,
    #[serde(default)]
    pub dump_intermediate: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// All stages on with default parameters.
    pub fn new(
        segmentation: SegmentationProviderSpec,
        features: FeatureProviderSpec,
        embedding: EmbeddingProviderSpec,
        prototypes: TextPrototypes,
    ) -> Self {
        PipelineConfig {
            ara: Stage::default(),
            act: Stage::default(),
            acf: Stage::default(),
            fixed_percentile: default_fixed_percentile(),
            segmentation,
            features,
            embedding,
            prototypes: Some(prototypes),
            dump_intermediate: false,
            output_dir: None,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_slice(bytes)
            .map_err(|e| Error::format("config.json", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&formats::read_bytes(path)?)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("config serialises");
        out.push(b'\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.ara.params.validate()?;
        self.act.params.validate()?;
        self.acf.params.validate()?;
        if !(self.fixed_percentile > 0.0 && self.fixed_percentile < 100.0) {
            return Err(Error::InvalidConfig(format!(
                "fixed_percentile must be in (0,100), got {}",
                self.fixed_percentile
            )));
        }
        self.segmentation.validate()?;
        self.features.validate()?;
        self.embedding.validate()?;
        if let Some(p) = &self.prototypes {
            p.validate()?;
        }
        Ok(())
    }

    pub fn stages(&self) -> StageFlags {
        StageFlags {
            ara: self.ara.enabled,
            act: self.act.enabled,
            acf: self.acf.enabled,
        }
    }

    /// Copy with `{pair}` in every file-provider path replaced by `pair_id`.
    pub fn for_pair(&self, pair_id: &str) -> Self {
        let sub = |s: &str| s.replace(PAIR_PLACEHOLDER, pair_id);
        let mut cfg = self.clone();
        if let SegmentationProviderSpec::File { manifest } = &mut cfg.segmentation {
            *manifest = sub(manifest);
        }
        if let FeatureProviderSpec::File { path } = &mut cfg.features {
            *path = sub(path);
        }
        if let EmbeddingProviderSpec::File { manifest } = &mut cfg.embedding {
            *manifest = sub(manifest);
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    pub ara: bool,
    pub act: bool,
    pub acf: bool,
}

/// Concatenate two phases' instance sets: all of `sa`, then all of `sb`,
/// renumbered. Identical masks are kept twice.
pub fn merge_mask_sets(sa: &MaskSet, sb: &MaskSet) -> Result<MaskSet> {
    if sa.dims() != sb.dims() {
        return Err(Error::DimensionMismatch(format!(
            "mask sets {:?} vs {:?}",
            sa.dims(),
            sb.dims()
        )));
    }
    let (h, w) = sa.dims();
    let mut all = MaskSet::new(h, w);
    for (_, m, p) in sa.iter().chain(sb.iter()) {
        all.push(m.clone(), p)?;
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub stages: StageFlags,
    /// Present when alignment ran.
    pub ara: Option<AraResult>,
    /// `I'_b`: the aligned image, or `I_b` itself with alignment off.
    pub aligned: Image,
    pub masks_a: MaskSet,
    pub masks_b: MaskSet,
    pub masks_all: MaskSet,
    /// Present when adaptive thresholding ran.
    pub difference: Option<DifferenceMap>,
    pub thresholds: Option<ThresholdBundle>,
    pub scores: Vec<RegionScore>,
    pub candidates: CandidateSet,
    pub identification: Identification,
    /// Wall time per stage; never written to disk.
    pub timings: Vec<(&'static str, Duration)>,
}

/// Similarity cut used when adaptive thresholding is off: the given
/// percentile of all scores, with degenerate scores counted as 1.
pub fn fixed_percentile_cut(scores: &[RegionScore], p: f64) -> Option<f64> {
    let values: Vec<f64> = scores.iter().map(|s| s.similarity.unwrap_or(1.0)).collect();
    identify::percentile(&values, p)
}

fn upsample_to(map: DenseFeatureMap, dims: (usize, usize)) -> Result<DenseFeatureMap> {
    if (map.height(), map.width()) == dims {
        Ok(map)
    } else {
        bilinear_upsample(&map, dims)
    }
}

/// Providers instantiated from one config; reusable across image pairs.
#[derive(Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    prototypes: TextPrototypes,
    segmenter: Segmenter,
    extractor: FeatureExtractor,
    embedder: Embedder,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let prototypes = config
            .prototypes
            .clone()
            .ok_or_else(|| Error::InvalidConfig("no text prototypes configured".into()))?;
        Ok(Pipeline {
            segmenter: Segmenter::new(config.segmentation.clone())?,
            extractor: FeatureExtractor::new(config.features.clone())?,
            embedder: Embedder::new(config.embedding.clone())?,
            prototypes,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run(&self, image_a: &Image, image_b: &Image) -> Result<RunArtifacts> {
        let cfg = &self.config;
        image_a.same_dims(image_b, "image pair").map_err(|e| e.in_stage("input"))?;
        let dims = image_a.dims();
        let mut timings = Vec::new();
        let mut clock = Instant::now();
        let mut lap = |name: &'static str, timings: &mut Vec<_>| {
            timings.push((name, clock.elapsed()));
            clock = Instant::now();
        };

        let ara = if cfg.ara.enabled {
            Some(ara::align(image_a, image_b, &cfg.ara.params).map_err(|e| e.in_stage("ara"))?)
        } else {
            None
        };
        let aligned = ara.as_ref().map_or_else(|| image_b.clone(), |r| r.aligned.clone());
        lap("ara", &mut timings);

        let (sa, sb) = rayon::join(
            || self.segmenter.segment(image_a, Phase::A),
            || self.segmenter.segment(&aligned, Phase::B),
        );
        let (masks_a, masks_b) = (
            sa.map_err(|e| e.in_stage("segment"))?,
            sb.map_err(|e| e.in_stage("segment"))?,
        );
        let masks_all = merge_mask_sets(&masks_a, &masks_b).map_err(|e| e.in_stage("segment"))?;
        lap("segment", &mut timings);

        let (fa, fb) = rayon::join(
            || self.extractor.extract(image_a, Phase::A).and_then(|f| upsample_to(f, dims)),
            || self.extractor.extract(&aligned, Phase::B).and_then(|f| upsample_to(f, dims)),
        );
        let (fa, fb) = (
            fa.map_err(|e| e.in_stage("features"))?,
            fb.map_err(|e| e.in_stage("features"))?,
        );
        if fa.channels() != fb.channels() {
            return Err(Error::DimensionMismatch(format!(
                "feature channels {} vs {}",
                fa.channels(),
                fb.channels()
            ))
            .in_stage("features"));
        }
        lap("features", &mut timings);

        let act_stage = |e: Error| e.in_stage("act");
        let scores = act::score_regions(&masks_all, &fa, &fb).map_err(act_stage)?;
        let (difference, thresholds, cut) = if cfg.act.enabled {
            let d = act::difference_map(&fa, &fb).map_err(act_stage)?;
            let t = act::compute_thresholds(&d, &cfg.act.params);
            let cut = t.cut;
            (Some(d), Some(t), cut)
        } else {
            // No scores means no masks; any cut selects nothing.
            let cut = fixed_percentile_cut(&scores, cfg.fixed_percentile).unwrap_or(f64::NEG_INFINITY);
            (None, None, cut)
        };
        let candidates = act::select_by_cut(&scores, cut);
        log::info!(
            "{} of {} instances are change candidates (cut {cut:.4})",
            candidates.len(),
            masks_all.len()
        );
        lap("act", &mut timings);

        let identification = identify::identify(
            &candidates,
            image_b,
            &masks_all,
            &self.prototypes,
            &self.embedder,
            &cfg.acf.params,
            cfg.acf.enabled,
        )
        .map_err(|e| e.in_stage("identify"))?;
        lap("identify", &mut timings);

        Ok(RunArtifacts {
            stages: cfg.stages(),
            ara,
            aligned,
            masks_a,
            masks_b,
            masks_all,
            difference,
            thresholds,
            scores,
            candidates,
            identification,
            timings,
        })
    }
}

/// One-shot convenience over [`Pipeline`].
pub fn run(image_a: &Image, image_b: &Image, config: &PipelineConfig) -> Result<RunArtifacts> {
    Pipeline::new(config.clone())?.run(image_a, image_b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AraSummary {
    pub delta_max: f64,
    pub alpha: f64,
}

/// Machine-readable digest of a run. Contains no timings, so identical runs
/// serialise identically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub stages: StageFlags,
    pub height: usize,
    pub width: usize,
    pub prototypes: TextPrototypes,
    pub ara: Option<AraSummary>,
    pub instances_a: usize,
    pub instances_b: usize,
    pub thresholds: Option<ThresholdBundle>,
    pub similarity_cut: f64,
    pub candidates: Vec<usize>,
    pub tau_conf: Option<f64>,
    pub accepted: Vec<usize>,
    pub regions_kept: usize,
    pub regions_dropped: usize,
    pub changed_pixels: usize,
}

impl RunArtifacts {
    pub fn summary(&self, prototypes: &TextPrototypes) -> RunSummary {
        let stats = &self.identification.region_stats;
        let kept = stats.iter().filter(|s| s.reliable).count();
        RunSummary {
            stages: self.stages,
            height: self.aligned.height(),
            width: self.aligned.width(),
            prototypes: prototypes.clone(),
            ara: self.ara.as_ref().map(|r| AraSummary {
                delta_max: r.delta_max,
                alpha: r.alpha,
            }),
            instances_a: self.masks_a.len(),
            instances_b: self.masks_b.len(),
            thresholds: self.thresholds,
            similarity_cut: self.candidates.cut,
            candidates: self.candidates.ids(),
            tau_conf: self.identification.tau_conf,
            accepted: self.identification.accepted.clone(),
            regions_kept: kept,
            regions_dropped: stats.len() - kept,
            changed_pixels: self.identification.change.mask.count(),
        }
    }
}

pub(crate) fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serialisable");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpEntry {
    /// Path relative to the dump directory.
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

pub const DUMP_MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct CandidateDump<'a> {
    thresholds: Option<&'a ThresholdBundle>,
    cut: f64,
    scores: &'a [RegionScore],
    candidates: Vec<usize>,
}

#[derive(Serialize)]
struct IdentificationDump<'a> {
    tau_conf: Option<f64>,
    classifications: &'a [identify::RegionClassification],
    accepted: &'a [usize],
    region_stats: &'a [identify::RegionStats],
}

/// Write every intermediate product into `dir` plus a checksummed
/// `manifest.json`. Returns the manifest entries in write order.
/// [`dump_artifacts`] when the config asks for it, otherwise nothing.
pub fn dump_if_enabled(
    artifacts: &RunArtifacts,
    config: &PipelineConfig,
    dir: &Path,
) -> Result<Vec<DumpEntry>> {
    if config.dump_intermediate {
        dump_artifacts(artifacts, dir)
    } else {
        Ok(Vec::new())
    }
}

pub fn dump_artifacts(artifacts: &RunArtifacts, dir: &Path) -> Result<Vec<DumpEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        formats::write_bytes(&dir.join(name), &bytes)?;
        entries.push(DumpEntry {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    };

    put("aligned.png", io::encode_image_png(&artifacts.aligned))?;
    for (name, set) in [
        ("masks_a.masks.json", &artifacts.masks_a),
        ("masks_b.masks.json", &artifacts.masks_b),
        ("masks_all.masks.json", &artifacts.masks_all),
    ] {
        put(name, formats::masks::encode(&MaskManifest::from_mask_set(set)))?;
    }
    if let Some(d) = &artifacts.difference {
        let (h, w) = d.values.dims();
        let map = DenseFeatureMap::new(1, h, w, d.values.data().iter().map(|&v| v as f32).collect())?;
        put("difference.dfm", dfm::encode(&map))?;
    }
    put(
        "candidates.json",
        pretty_json(&CandidateDump {
            thresholds: artifacts.thresholds.as_ref(),
            cut: artifacts.candidates.cut,
            scores: &artifacts.scores,
            candidates: artifacts.candidates.ids(),
        }),
    )?;
    let ident = &artifacts.identification;
    put(
        "identification.json",
        pretty_json(&IdentificationDump {
            tau_conf: ident.tau_conf,
            classifications: &ident.classifications,
            accepted: &ident.accepted,
            region_stats: &ident.region_stats,
        }),
    )?;
    put("change.png", io::encode_mask_png(&ident.change.mask))?;
    put(
        "change.masks.json",
        formats::masks::encode(&MaskManifest::single(&ident.change.mask)),
    )?;

    formats::write_bytes(&dir.join(DUMP_MANIFEST), &pretty_json(&entries))?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{BBox, BinaryMask};
    use std::collections::BTreeMap;

    fn rect(b: BBox) -> BinaryMask {
        BinaryMask::rect(8, 8, b).unwrap()
    }

    #[test]
    fn merge_preserves_order_and_tags() {
        let a = MaskSet::from_masks(
            8,
            8,
            vec![rect(BBox::new(0, 0, 2, 2)), rect(BBox::new(2, 2, 4, 4)), rect(BBox::new(4, 4, 8, 8))],
            Phase::A,
        )
        .unwrap();
        let b = MaskSet::from_masks(8, 8, vec![rect(BBox::new(0, 0, 2, 2)), rect(BBox::new(0, 4, 8, 8))], Phase::B)
            .unwrap();
        let all = merge_mask_sets(&a, &b).unwrap();
        assert_eq!(all.len(), 5);
        assert_eq!(all.get(3), b.get(0));
        assert_eq!(all.get(0), all.get(3));
        assert_eq!(all.phase(2), Some(Phase::A));
        assert_eq!(all.phase(3), Some(Phase::B));

        let empty = MaskSet::new(8, 8);
        assert_eq!(merge_mask_sets(&a, &empty).unwrap(), a);
        assert!(merge_mask_sets(&a, &MaskSet::new(4, 8)).is_err());
    }

    fn synthetic_config() -> PipelineConfig {
        let anchors: BTreeMap<String, [f64; 3]> = [
            ("buildings".to_string(), [0.9, 0.1, 0.1]),
            ("background".to_string(), [0.5, 0.5, 0.5]),
        ]
        .into_iter()
        .collect();
        PipelineConfig::new(
            SegmentationProviderSpec::SyntheticGrid { tile: 16 },
            FeatureProviderSpec::Synthetic { blur_radius: 2 },
            EmbeddingProviderSpec::SyntheticColor { anchors },
            TextPrototypes {
                target: "buildings".into(),
                background: "background".into(),
            },
        )
    }

    #[test]
    fn identical_pair_yields_empty_mask() {
        let img = Image::filled(64, 64, [120, 130, 90]);
        for flags in [(true, true, true), (false, false, false)] {
            let mut cfg = synthetic_config();
            (cfg.ara.enabled, cfg.act.enabled, cfg.acf.enabled) = flags;
            let out = run(&img, &img, &cfg).unwrap();
            assert!(out.candidates.is_empty());
            assert!(out.identification.change.mask.is_empty());
        }
    }

    #[test]
    fn config_json_round_trip_and_rejection() {
        let cfg = synthetic_config();
        let back = PipelineConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let minimal = br#"{
            "segmentation": {"kind": "synthetic-grid", "tile": 32},
            "features": {"kind": "synthetic"},
            "embedding": {"kind": "synthetic-color", "anchors": {}},
            "act": {"params": {"theta_max": 170}}
        }"#;
        let m = PipelineConfig::from_json(minimal).unwrap();
        assert!(m.ara.enabled && m.act.enabled && m.acf.enabled);
        assert_eq!(m.act.params.theta_max, 170.0);
        assert_eq!(m.act.params.w_global, 0.7);
        assert_eq!(m.fixed_percentile, 30.0);
        assert!(m.prototypes.is_none());
        assert!(Pipeline::new(m).is_err());

        let unknown = br#"{
            "segmentation": {"kind": "synthetic-grid", "tile": 32},
            "features": {"kind": "synthetic"},
            "embedding": {"kind": "synthetic-color", "anchors": {}},
            "surprise": 1
        }"#;
        assert!(PipelineConfig::from_json(unknown).is_err());
    }

    #[test]
    fn pair_placeholder_substitution() {
        let mut cfg = synthetic_config();
        cfg.segmentation = SegmentationProviderSpec::File {
            manifest: "seg/{pair}_{phase}.masks.json".into(),
        };
        let c = cfg.for_pair("p7");
        assert_eq!(
            c.segmentation,
            SegmentationProviderSpec::File {
                manifest: "seg/p7_{phase}.masks.json".into()
            }
        );
    }

    #[test]
    fn fallback_cut_is_percentile_of_scores() {
        let s = |id, v: Option<f64>| RegionScore {
            id,
            pooled_a: vec![],
            pooled_b: vec![],
            similarity: v,
        };
        let scores = vec![s(0, Some(0.2)), s(1, Some(0.4)), s(2, None), s(3, Some(0.9))];
        // Sorted {0.2, 0.4, 0.9, 1.0}; rank 0.3*3 = 0.9.
        let cut = fixed_percentile_cut(&scores, 30.0).unwrap();
        assert!((cut - (0.2 + 0.9 * 0.2)).abs() < 1e-12);
        assert_eq!(act::select_by_cut(&scores, cut).ids(), vec![0]);
        assert_eq!(fixed_percentile_cut(&[], 30.0), None);
    }

    fn grey_scene() -> (Image, Image, BinaryMask) {
        let a = Image::filled(256, 256, [128, 128, 128]);
        let mut b = a.clone();
        let tile = BBox::new(96, 64, 128, 96);
        for r in tile.row0..tile.row1 {
            for c in tile.col0..tile.col1 {
                b.set_pixel(r, c, [230, 26, 26]);
            }
        }
        (a, b, BinaryMask::rect(256, 256, tile).unwrap())
    }

    #[test]
    fn recoloured_tile_is_exactly_the_change() {
        let (a, b, tile) = grey_scene();
        // Colour features are all-positive, so the angle band must sit high.
        let cfg = crate::synth::fixture_config();
        let out = run(&a, &b, &cfg).unwrap();
        assert_eq!(out.identification.change.mask, tile);
        // The tile is segmented in both phases and S_all keeps both copies.
        let ids = out.candidates.ids();
        assert_eq!(ids.len(), 2);
        assert_eq!(out.masks_all.get(ids[0]), Some(&tile));
        assert_eq!(out.masks_all.get(ids[1]), Some(&tile));

        let mut none = cfg.clone();
        (none.ara.enabled, none.act.enabled, none.acf.enabled) = (false, false, false);
        let out = run(&a, &b, &none).unwrap();
        assert_eq!(out.identification.change.mask.dims(), (256, 256));
        assert!(out.difference.is_none() && out.ara.is_none());
    }

    #[test]
    fn dumps_reparse_and_are_stable() {
        let (a, b, _) = grey_scene();
        let mut cfg = crate::synth::fixture_config();
        let out = run(&a, &b, &cfg).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        assert!(dump_if_enabled(&out, &cfg, d1.path()).unwrap().is_empty());
        assert_eq!(std::fs::read_dir(d1.path()).unwrap().count(), 0);

        cfg.dump_intermediate = true;
        let e1 = dump_if_enabled(&out, &cfg, d1.path()).unwrap();
        assert!(e1.len() >= 6);
        for e in &e1 {
            let p = d1.path().join(&e.file);
            let bytes = std::fs::read(&p).unwrap();
            assert_eq!(bytes.len() as u64, e.bytes);
            if let Some(kind) = formats::inspect::FileKind::from_path(&p) {
                formats::inspect::inspect_bytes(kind, &bytes).unwrap();
            } else if e.file.ends_with(".png") {
                image::load_from_memory(&bytes).unwrap();
            } else {
                serde_json::from_slice::<serde_json::Value>(&bytes).unwrap();
            }
        }
        let listed: Vec<DumpEntry> =
            serde_json::from_slice(&std::fs::read(d1.path().join(DUMP_MANIFEST)).unwrap()).unwrap();
        assert_eq!(listed, e1);

        let again = run(&a, &b, &cfg).unwrap();
        let d2 = tempfile::tempdir().unwrap();
        assert_eq!(dump_artifacts(&again, d2.path()).unwrap(), e1);
    }
}
