//! Semantic identification of change candidates and adaptive confidence
//! filtering.
//!
//! Each candidate region is cropped from the post-event image, embedded, and
//! scored against a target/background prototype pair with a softmax. A
//! percentile-derived confidence cut selects instances, and 8-connected
//! regions of the merged mask survive only if they are large enough,
//! confident enough on average, and internally consistent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::act::CandidateSet;
use crate::error::{Error, Result};
use crate::imaging::components::label_grid;
use crate::imaging::{mask_bbox, rle_encode, BBox, BinaryMask, Grid, Image, MaskSet, RealGrid};
use crate::providers::Embedder;

/// Mutually exclusive text prototypes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextPrototypes {
    pub target: String,
    pub background: String,
}

impl TextPrototypes {
    pub fn validate(&self) -> Result<()> {
        if self.target.trim().is_empty() || self.background.trim().is_empty() {
            return Err(Error::InvalidConfig("prototypes must be nonempty".into()));
        }
        if self.target == self.background {
            return Err(Error::InvalidConfig(
                "target and background prototypes must differ".into(),
            ));
        }
        Ok(())
    }

    /// Parse a `.prompts.json` document.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let p: TextPrototypes = serde_json::from_slice(bytes)
            .map_err(|e| Error::format("prompts.json", e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcfConfig {
    /// Percentile of positive confidences used as the baseline, in (0, 100].
    pub percentile: f64,
    /// Filtering intensity; the baseline is divided by it.
    pub lambda: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// Floor on a region's mean confidence.
    pub mu_min: f64,
    /// Ceiling on a region's coefficient of variation.
    pub gamma: f64,
    /// Minimum region area in pixels.
    pub a_min: usize,
    pub crop_pad_fraction: f64,
    pub softmax_temperature: f64,
}

impl Default for AcfConfig {
    fn default() -> Self {
        AcfConfig {
            percentile: 25.0,
            lambda: 1.2,
            clip_lo: 0.5,
            clip_hi: 0.95,
            mu_min: 0.5,
            gamma: 0.5,
            a_min: 64,
            crop_pad_fraction: 0.1,
            softmax_temperature: 100.0,
        }
    }
}

impl AcfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return bad(format!("acf.percentile must be in (0,100], got {}", self.percentile));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("acf.lambda must be > 0, got {}", self.lambda));
        }
        if !(0.0 <= self.clip_lo && self.clip_lo <= self.clip_hi && self.clip_hi <= 1.0) {
            return bad(format!(
                "acf clip bounds need 0 <= lo <= hi <= 1, got {} .. {}",
                self.clip_lo, self.clip_hi
            ));
        }
        if !(0.0..=1.0).contains(&self.mu_min) {
            return bad(format!("acf.mu_min must be in [0,1], got {}", self.mu_min));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("acf.gamma must be > 0, got {}", self.gamma));
        }
        if !(self.crop_pad_fraction >= 0.0 && self.crop_pad_fraction.is_finite()) {
            return bad(format!(
                "acf.crop_pad_fraction must be >= 0, got {}",
                self.crop_pad_fraction
            ));
        }
        if !(self.softmax_temperature > 0.0 && self.softmax_temperature.is_finite()) {
            return bad(format!(
                "acf.softmax_temperature must be > 0, got {}",
                self.softmax_temperature
            ));
        }
        Ok(())
    }
}

/// Bounding box of `mask` padded by `max(4, round(f * max(h, w)))` per side,
/// clamped to the frame.
pub fn crop_box(mask: &BinaryMask, pad_fraction: f64) -> Result<BBox> {
    let b = mask_bbox(mask)?;
    let side = b.height().max(b.width()) as f64;
    let pad = 4usize.max((pad_fraction * side).round() as usize);
    Ok(BBox::new(
        b.row0.saturating_sub(pad),
        b.col0.saturating_sub(pad),
        (b.row1 + pad).min(mask.height()),
        (b.col1 + pad).min(mask.width()),
    ))
}

pub fn crop_region(image: &Image, mask: &BinaryMask, config: &AcfConfig) -> Result<Image> {
    if image.dims() != mask.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image {:?} vs mask {:?}",
            image.dims(),
            mask.dims()
        )));
    }
    image.crop(crop_box(mask, config.crop_pad_fraction)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionClassification {
    pub id: usize,
    /// `None` when the region embedding was degenerate.
    pub sim_target: Option<f64>,
    pub sim_background: Option<f64>,
    /// Target probability.
    pub p_target: f64,
}

/// Two-way softmax of temperature-scaled similarities, target component.
pub fn softmax_target(sim_target: f64, sim_background: f64, temperature: f64) -> f64 {
    1.0 / (1.0 + (temperature * (sim_background - sim_target)).exp())
}

pub fn classify_region(
    crop: &Image,
    mask_id: usize,
    prototypes: &TextPrototypes,
    embedder: &Embedder,
    config: &AcfConfig,
) -> Result<RegionClassification> {
    let target = embedder.embed_text(&prototypes.target)?;
    let background = embedder.embed_text(&prototypes.background)?;
    let region = embedder.embed_region(crop, mask_id)?;
    if region.dim() != target.dim() || region.dim() != background.dim() {
        return Err(Error::DimensionMismatch(format!(
            "region embedding dim {} vs text dims {}/{}",
            region.dim(),
            target.dim(),
            background.dim()
        )));
    }
    let sim_target = region.cosine(&target);
    let sim_background = region.cosine(&background);
    let p_target = match (sim_target, sim_background) {
        (Some(t), Some(b)) => softmax_target(t, b, config.softmax_temperature),
        _ => 0.0,
    };
    Ok(RegionClassification {
        id: mask_id,
        sim_target,
        sim_background,
        p_target,
    })
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// `clip(percentile(positives, p) / lambda, clip_lo, clip_hi)`, or `None`
/// when there are no positives.
pub fn adaptive_conf_threshold(positives: &[f64], config: &AcfConfig) -> Option<f64> {
    percentile(positives, config.percentile)
        .map(|base| (base / config.lambda).clamp(config.clip_lo, config.clip_hi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionStats {
    pub label: u32,
    pub area: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// `std_dev / mean`; infinite when the mean is zero.
    pub cv: f64,
    pub reliable: bool,
}

impl RegionStats {
    pub fn passes(&self, config: &AcfConfig) -> bool {
        self.area >= config.a_min && self.mean >= config.mu_min && self.cv < config.gamma
    }
}

/// Final change mask plus the per-pixel confidence it was filtered on.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMask {
    pub mask: BinaryMask,
    pub confidence: RealGrid,
}

impl ChangeMask {
    pub fn empty(height: usize, width: usize) -> Self {
        ChangeMask {
            mask: BinaryMask::empty(height, width),
            confidence: Grid::filled(height, width, 0.0),
        }
    }
}

/// Union the accepted masks with per-pixel max confidence, then keep only
/// reliable 8-connected regions.
pub fn connected_filter(
    accepted: &[(&BinaryMask, f64)],
    dims: (usize, usize),
    config: &AcfConfig,
) -> Result<(ChangeMask, Vec<RegionStats>)> {
    let (h, w) = dims;
    let mut confidence = Grid::filled(h, w, 0.0f64);
    let mut covered = Grid::filled(h, w, false);
    for (mask, p) in accepted {
        if mask.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "accepted mask {:?} vs frame {:?}",
                mask.dims(),
                dims
            )));
        }
        for i in mask.set_indices() {
            covered.data_mut()[i] = true;
            let c = &mut confidence.data_mut()[i];
            *c = c.max(*p);
        }
    }
    let labeling = label_grid(&covered);
    let mut keep = Grid::filled(h, w, false);
    let mut stats = Vec::with_capacity(labeling.count());
    for comp in &labeling.components {
        let n = comp.area as f64;
        let values = comp.pixels.iter().map(|&i| confidence.data()[i]);
        let lo = values.clone().fold(f64::INFINITY, f64::min);
        let hi = values.clone().fold(f64::NEG_INFINITY, f64::max);
        // A uniform region has exactly zero spread; summing would leave
        // rounding residue in both moments.
        let (mean, std_dev) = if lo == hi {
            (lo, 0.0)
        } else {
            let mean = values.clone().sum::<f64>() / n;
            let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let cv = if mean == 0.0 { f64::INFINITY } else { std_dev / mean };
        let mut s = RegionStats {
            label: comp.label,
            area: comp.area,
            mean,
            std_dev,
            cv,
            reliable: false,
        };
        s.reliable = s.passes(config);
        if s.reliable {
            for &i in &comp.pixels {
                keep.data_mut()[i] = true;
            }
        }
        stats.push(s);
    }
    for (c, &k) in confidence.data_mut().iter_mut().zip(keep.data()) {
        if !k {
            *c = 0.0;
        }
    }
    Ok((
        ChangeMask {
            mask: rle_encode(&keep),
            confidence,
        },
        stats,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub classifications: Vec<RegionClassification>,
    /// `None` when no candidate was judged target, or filtering is off.
    pub tau_conf: Option<f64>,
    pub accepted: Vec<usize>,
    pub region_stats: Vec<RegionStats>,
    pub change: ChangeMask,
}

pub fn classify_candidates(
    candidates: &CandidateSet,
    image_b: &Image,
    masks: &MaskSet,
    prototypes: &TextPrototypes,
    embedder: &Embedder,
    config: &AcfConfig,
) -> Result<Vec<RegionClassification>> {
    candidates
        .members
        .par_iter()
        .map(|m| {
            let mask = masks
                .get(m.id)
                .ok_or_else(|| Error::InvalidConfig(format!("candidate id {} not in mask set", m.id)))?;
            let crop = crop_region(image_b, mask, config)?;
            classify_region(&crop, m.id, prototypes, embedder, config)
        })
        .collect()
}

/// Classify candidates and build the final mask.
///
/// With `filtering` off, every candidate with `p > 0.5` is kept and no
/// region gates apply.
pub fn identify(
    candidates: &CandidateSet,
    image_b: &Image,
    masks: &MaskSet,
    prototypes: &TextPrototypes,
    embedder: &Embedder,
    config: &AcfConfig,
    filtering: bool,
) -> Result<Identification> {
    let dims = masks.dims();
    let classifications =
        classify_candidates(candidates, image_b, masks, prototypes, embedder, config)?;
    let positives: Vec<f64> = classifications
        .iter()
        .map(|c| c.p_target)
        .filter(|&p| p > 0.5)
        .collect();

    if !filtering {
        let accepted: Vec<usize> = classifications
            .iter()
            .filter(|c| c.p_target > 0.5)
            .map(|c| c.id)
            .collect();
        let mut union = Grid::filled(dims.0, dims.1, false);
        let mut confidence = Grid::filled(dims.0, dims.1, 0.0f64);
        for c in classifications.iter().filter(|c| c.p_target > 0.5) {
            for i in masks.get(c.id).expect("checked above").set_indices() {
                union.data_mut()[i] = true;
                let v = &mut confidence.data_mut()[i];
                *v = v.max(c.p_target);
            }
        }
        return Ok(Identification {
            classifications,
            tau_conf: None,
            accepted,
            region_stats: Vec::new(),
            change: ChangeMask {
                mask: rle_encode(&union),
                confidence,
            },
        });
    }

    let Some(tau_conf) = adaptive_conf_threshold(&positives, config) else {
        return Ok(Identification {
            classifications,
            tau_conf: None,
            accepted: Vec::new(),
            region_stats: Vec::new(),
            change: ChangeMask::empty(dims.0, dims.1),
        });
    };
    let accepted: Vec<usize> = classifications
        .iter()
        .filter(|c| c.p_target > tau_conf)
        .map(|c| c.id)
        .collect();
    let accepted_masks: Vec<(&BinaryMask, f64)> = classifications
        .iter()
        .filter(|c| c.p_target > tau_conf)
        .map(|c| (masks.get(c.id).expect("checked above"), c.p_target))
        .collect();
    let (change, region_stats) = connected_filter(&accepted_masks, dims, config)?;
    Ok(Identification {
        classifications,
        tau_conf: Some(tau_conf),
        accepted,
        region_stats,
        change,
    })
}
