//! Changed-class metrics and dataset-level evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{self, masks};
use crate::identify::TextPrototypes;
use crate::imaging::{io, BinaryMask};
use crate::pipeline::{Pipeline, PipelineConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Pixel confusion counts with "changed" as the positive class.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    // Walk both run sequences together; no dense decode needed.
    let mut c = ConfusionCounts::default();
    let (mut i, mut j) = (0usize, 0usize);
    let (mut left_p, mut left_g) = (0u64, 0u64);
    let (mut val_p, mut val_g) = (true, true);
    let (rp, rg) = (pred.runs(), gt.runs());
    loop {
        while left_p == 0 && i < rp.len() {
            left_p = rp[i] as u64;
            val_p = i % 2 == 1;
            i += 1;
        }
        while left_g == 0 && j < rg.len() {
            left_g = rg[j] as u64;
            val_g = j % 2 == 1;
            j += 1;
        }
        if left_p == 0 || left_g == 0 {
            break;
        }
        let n = left_p.min(left_g);
        match (val_p, val_g) {
            (true, true) => c.tp += n,
            (true, false) => c.fp += n,
            (false, true) => c.fn_ += n,
            (false, false) => c.tn += n,
        }
        left_p -= n;
        left_g -= n;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Metrics {
    /// Zero denominators give 0, except that an empty prediction against an
    /// empty ground truth has IoU 1.
    pub fn from_counts(c: &ConfusionCounts) -> Metrics {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let union = c.tp + c.fp + c.fn_;
        Metrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
            iou: if union == 0 { 1.0 } else { c.tp as f64 / union as f64 },
        }
    }

    /// Metrics implied by a published precision/recall pair, using
    /// `IoU = F1 / (2 - F1)`.
    pub fn from_precision_recall(precision: f64, recall: f64) -> Metrics {
        let f1 = harmonic(precision, recall);
        Metrics {
            precision,
            recall,
            f1,
            iou: f1 / (2.0 - f1),
        }
    }

    fn mean(all: &[Metrics]) -> Option<Metrics> {
        if all.is_empty() {
            return None;
        }
        let n = all.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Some(Metrics {
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
            iou: avg(|m| m.iou),
        })
    }
}

pub fn metrics(counts: &ConfusionCounts) -> Metrics {
    Metrics::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub id: String,
    pub image_a: PathBuf,
    pub image_b: PathBuf,
    /// Grayscale PNG (nonzero = changed) or a single-instance `.masks.json`.
    pub ground_truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Prompt file applied to every pair, overriding the config's prototypes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    pub pairs: Vec<PairEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawManifest {
    List(Vec<PairEntry>),
    Object(DatasetManifest),
}

impl DatasetManifest {
    /// Accepts a bare JSON list of pairs or `{"prompts": ..., "pairs": [...]}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: RawManifest = serde_json::from_slice(bytes).map_err(|e| {
            Error::format("dataset manifest", format!("not a pair list or manifest object: {e}"))
        })?;
        let m = match raw {
            RawManifest::List(pairs) => DatasetManifest { prompts: None, pairs },
            RawManifest::Object(m) => m,
        };
        m.validate()?;
        Ok(m)
    }

    /// Read a manifest; relative paths resolve against its directory.
    pub fn read(path: &Path) -> Result<Self> {
        let mut m = Self::from_json(&formats::read_bytes(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut m.prompts {
            resolve(p);
        }
        for e in &mut m.pairs {
            resolve(&mut e.image_a);
            resolve(&mut e.image_b);
            resolve(&mut e.ground_truth);
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::format("dataset manifest", "no pairs"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for e in &self.pairs {
            if e.id.is_empty() {
                return Err(Error::format("dataset manifest", "empty pair id"));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::format("dataset manifest", format!("duplicate pair id {:?}", e.id)));
            }
            if e.image_a == e.image_b || e.image_a == e.ground_truth || e.image_b == e.ground_truth {
                return Err(Error::format(
                    "dataset manifest",
                    format!("pair {:?} reuses a path", e.id),
                ));
            }
        }
        Ok(())
    }
}

pub fn read_ground_truth(path: &Path) -> Result<BinaryMask> {
    let name = path.to_string_lossy();
    if name.ends_with(".masks.json") {
        let m = masks::read(path)?;
        if m.instances.len() != 1 {
            return Err(Error::format(
                "masks.json",
                format!("ground truth needs exactly one instance, found {}", m.instances.len()),
            ));
        }
        Ok(m.instances.into_iter().next().expect("one instance"))
    } else {
        io::read_mask_png(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PairOutcome {
    Scored {
        counts: ConfusionCounts,
        metrics: Metrics,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub id: String,
    #[serde(flatten)]
    pub outcome: PairOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub pairs: Vec<PairResult>,
    pub scored: usize,
    pub failed: usize,
    /// Metrics of the summed confusion counts.
    pub micro: Option<Metrics>,
    /// Mean of per-pair metrics.
    #[serde(rename = "macro")]
    pub macro_: Option<Metrics>,
}

impl EvalReport {
    pub fn aggregate(&self, how: Aggregation) -> Option<Metrics> {
        match how {
            Aggregation::Micro => self.micro,
            Aggregation::Macro => self.macro_,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::pipeline::pretty_json(self)
    }

    /// Fixed-width table of percentages to two decimals.
    pub fn to_table(&self) -> String {
        let width = self
            .pairs
            .iter()
            .map(|p| p.id.len())
            .chain([5])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}",
            "pair", "Prec", "Rec", "F1", "IoU"
        );
        let row = |out: &mut String, name: &str, m: &Metrics| {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}  {:>7.2}",
                name,
                m.precision * 100.0,
                m.recall * 100.0,
                m.f1 * 100.0,
                m.iou * 100.0
            );
        };
        for p in &self.pairs {
            match &p.outcome {
                PairOutcome::Scored { metrics, .. } => row(&mut out, &p.id, metrics),
                PairOutcome::Failed { error } => {
                    let _ = writeln!(out, "{:<width$}  FAILED: {error}", p.id);
                }
            }
        }
        let _ = writeln!(out, "{}", "-".repeat(width + 36));
        for (name, m) in [("micro", &self.micro), ("macro", &self.macro_)] {
            match m {
                Some(m) => row(&mut out, name, m),
                None => {
                    let _ = writeln!(out, "{name:<width$}  {:>7}", "n/a");
                }
            }
        }
        out
    }
}

/// Collate per-pair outcomes (already in manifest order) into a report.
pub fn build_report(pairs: Vec<PairResult>) -> EvalReport {
    let scored: Vec<(ConfusionCounts, Metrics)> = pairs
        .iter()
        .filter_map(|p| match p.outcome {
            PairOutcome::Scored { counts, metrics } => Some((counts, metrics)),
            PairOutcome::Failed { .. } => None,
        })
        .collect();
    let micro = (!scored.is_empty()).then(|| {
        let total = scored
            .iter()
            .fold(ConfusionCounts::default(), |acc, (c, _)| acc + *c);
        Metrics::from_counts(&total)
    });
    let per_pair: Vec<Metrics> = scored.iter().map(|(_, m)| *m).collect();
    EvalReport {
        scored: scored.len(),
        failed: pairs.len() - scored.len(),
        micro,
        macro_: Metrics::mean(&per_pair),
        pairs,
    }
}

fn evaluate_pair(entry: &PairEntry, config: &PipelineConfig) -> Result<ConfusionCounts> {
    let image_a = io::read_image(&entry.image_a)?;
    let image_b = io::read_image(&entry.image_b)?;
    let gt = read_ground_truth(&entry.ground_truth)?;
    let pipeline = Pipeline::new(config.for_pair(&entry.id))?;
    let out = pipeline.run(&image_a, &image_b)?;
    confusion(&out.identification.change.mask, &gt)
}

/// Run the pipeline over every pair. A failing pair is recorded in the
/// report and does not stop the others.
pub fn evaluate_dataset(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<EvalReport> {
    manifest.validate()?;
    let mut config = config.clone();
    if let Some(p) = &manifest.prompts {
        config.prototypes = Some(TextPrototypes::from_json(&formats::read_bytes(p)?)?);
    }
    config.validate()?;
    let pairs = manifest
        .pairs
        .par_iter()
        .map(|e| {
            let outcome = match evaluate_pair(e, &config) {
                Ok(counts) => PairOutcome::Scored {
                    counts,
                    metrics: Metrics::from_counts(&counts),
                },
                Err(err) => {
                    log::warn!("pair {}: {err}", e.id);
                    PairOutcome::Failed {
                        error: err.to_string(),
                    }
                }
            };
            PairResult {
                id: e.id.clone(),
                outcome,
            }
        })
        .collect();
    Ok(build_report(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{rle_encode, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_mask(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> BinaryMask {
        rle_encode(&Grid::from_fn(h, w, f))
    }

    #[test]
    fn confusion_examples() {
        let m = grid_mask(4, 4, |r, c| r * 4 + c < 10);
        assert_eq!(
            confusion(&m, &m).unwrap(),
            ConfusionCounts { tp: 10, fp: 0, fn_: 0, tn: 6 }
        );
        let gt = grid_mask(4, 4, |r, _| r == 1);
        let gt5 = grid_mask(4, 4, |r, c| r * 4 + c >= 11);
        let c = confusion(&BinaryMask::empty(4, 4), &gt5).unwrap();
        assert_eq!((c.tp, c.fn_), (0, 5));
        assert!(confusion(&gt, &BinaryMask::empty(4, 5)).is_err());
    }

    #[test]
    fn confusion_matches_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let (h, w) = (rng.gen_range(1..20), rng.gen_range(1..20));
            let pa = rng.gen_range(0.0..1.0);
            let pb = rng.gen_range(0.0..1.0);
            let a = Grid::from_fn(h, w, |_, _| rng.gen_bool(pa));
            let b = Grid::from_fn(h, w, |_, _| rng.gen_bool(pb));
            let mut expect = ConfusionCounts::default();
            for (&x, &y) in a.data().iter().zip(b.data()) {
                match (x, y) {
                    (true, true) => expect.tp += 1,
                    (true, false) => expect.fp += 1,
                    (false, true) => expect.fn_ += 1,
                    (false, false) => expect.tn += 1,
                }
            }
            let got = confusion(&rle_encode(&a), &rle_encode(&b)).unwrap();
            assert_eq!(got, expect);
            assert_eq!(got.total(), (h * w) as u64);
        }
    }

    #[test]
    fn metric_conventions() {
        let m = Metrics::from_counts(&ConfusionCounts { tp: 50, fp: 50, fn_: 50, tn: 0 });
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        assert!((m.iou - 1.0 / 3.0).abs() < 1e-15);
        let e = Metrics::from_counts(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 16 });
        assert_eq!((e.precision, e.recall, e.f1, e.iou), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn published_precision_recall_pair() {
        let m = Metrics::from_precision_recall(0.6283, 0.7410);
        assert!((m.f1 * 100.0 - 68.00).abs() < 0.01, "{}", m.f1);
        assert!((m.iou * 100.0 - 51.52).abs() < 0.01, "{}", m.iou);
    }

    #[test]
    fn micro_and_macro_aggregation() {
        let pair = |id: &str, tp, fp, fn_| {
            let counts = ConfusionCounts { tp, fp, fn_, tn: 0 };
            PairResult {
                id: id.into(),
                outcome: PairOutcome::Scored {
                    counts,
                    metrics: Metrics::from_counts(&counts),
                },
            }
        };
        let r = build_report(vec![pair("a", 10, 0, 0), pair("b", 0, 10, 10)]);
        assert_eq!(r.micro.unwrap().precision, 0.5);
        assert_eq!(r.macro_.unwrap().precision, 0.5);
        assert_eq!(r.macro_.unwrap().f1, 0.5);
        assert!((r.micro.unwrap().f1 - 0.5).abs() < 1e-15);

        let one = build_report(vec![pair("a", 3, 1, 2)]);
        assert_eq!(one.micro, one.macro_);

        let mut with_fail = vec![pair("a", 1, 0, 0)];
        with_fail.push(PairResult {
            id: "bad".into(),
            outcome: PairOutcome::Failed { error: "boom".into() },
        });
        let r = build_report(with_fail);
        assert_eq!((r.scored, r.failed), (1, 1));
        let table = r.to_table();
        assert!(table.contains("FAILED: boom"));
        assert!(table.contains("100.00"));
    }

    #[test]
    fn manifest_forms() {
        let list = br#"[{"id":"p0","image_a":"a.png","image_b":"b.png","ground_truth":"gt.png"}]"#;
        let m = DatasetManifest::from_json(list).unwrap();
        assert_eq!(m.pairs.len(), 1);
        let obj = br#"{"prompts":"p.json","pairs":[{"id":"p0","image_a":"a.png","image_b":"b.png","ground_truth":"gt.png"}]}"#;
        assert_eq!(DatasetManifest::from_json(obj).unwrap().prompts, Some("p.json".into()));
        assert!(DatasetManifest::from_json(b"[]").is_err());
        let dup = br#"[{"id":"p0","image_a":"a.png","image_b":"b.png","ground_truth":"gt.png"},
                       {"id":"p0","image_a":"c.png","image_b":"d.png","ground_truth":"gt2.png"}]"#;
        assert!(DatasetManifest::from_json(dup).is_err());
        let same = br#"[{"id":"p0","image_a":"a.png","image_b":"a.png","ground_truth":"gt.png"}]"#;
        assert!(DatasetManifest::from_json(same).is_err());
    }
}
