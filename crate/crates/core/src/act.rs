//! Adaptive change thresholding.
//!
//! A normalised feature-difference map drives a global Otsu cut and an
//! edge-band Otsu cut; their fusion is mapped onto an angle, and each instance
//! mask becomes a change candidate when the cosine similarity of its pooled
//! features falls below `cos(180° - θ)`.

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::morph::dilate_grid;
use crate::imaging::{sobel_magnitude, BinaryMask, DenseFeatureMap, Grid, MaskSet, RealGrid};

pub const OTSU_BINS: usize = 256;

/// Min-max normalised per-pixel feature distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMap {
    pub values: RealGrid,
    /// Set when every raw distance was equal; `values` is then all zero.
    pub degenerate: bool,
}

pub fn difference_map(fa: &DenseFeatureMap, fb: &DenseFeatureMap) -> Result<DifferenceMap> {
    if fa.dims() != fb.dims() {
        return Err(Error::DimensionMismatch(format!(
            "feature maps {:?} vs {:?}",
            fa.dims(),
            fb.dims()
        )));
    }
    let (channels, h, w) = fa.dims();
    let n = h * w;
    let mut raw = vec![0.0f64; n];
    for c in 0..channels {
        for ((acc, &a), &b) in raw.iter_mut().zip(fa.channel(c)).zip(fb.channel(c)) {
            let d = a as f64 - b as f64;
            *acc += d * d;
        }
    }
    raw.iter_mut().for_each(|v| *v = v.sqrt());
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(DifferenceMap {
            values: Grid::filled(h, w, 0.0),
            degenerate: true,
        });
    }
    let span = hi - lo;
    let values = raw.into_iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect();
    Ok(DifferenceMap {
        values: Grid::from_vec(h, w, values)?,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuResult {
    /// Upper edge of the last bin of the lower class, in `[0,1]`: a sample
    /// falls in the lower class iff it is below this value.
    pub threshold: f64,
    /// Index of the last bin of the lower class.
    pub cut_bin: usize,
    /// Only one bin was occupied; `threshold` is 0.
    pub degenerate: bool,
}

#[inline]
pub fn otsu_bin(v: f64) -> usize {
    ((v * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

pub fn bin_upper_edge(bin: usize) -> f64 {
    (bin + 1) as f64 / OTSU_BINS as f64
}

/// Histogram samples in `[0,1]` into the Otsu bins.
pub fn otsu_histogram(values: &[f64]) -> [u64; OTSU_BINS] {
    let mut hist = [0u64; OTSU_BINS];
    for &v in values {
        hist[otsu_bin(v.clamp(0.0, 1.0))] += 1;
    }
    hist
}

/// Between-class score `(n1*s0 - n0*s1)^2 / (n0*n1)` in bin-index units.
/// Proportional to `w0*w1*(mu0-mu1)^2`, so the argmax is the same.
#[derive(Clone, Copy)]
struct Score {
    /// `|n1*s0 - n0*s1|`
    gap: u128,
    den: u128,
}

impl Score {
    fn new(n0: u64, s0: u64, n1: u64, s1: u64) -> Score {
        let gap = (n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128).unsigned_abs();
        Score {
            gap,
            den: n0 as u128 * n1 as u128,
        }
    }

    /// Exact `gap^2/den > other.gap^2/other.den`. Frames past about a
    /// megapixel overflow u128, so fall back to big integers there.
    fn greater_than(self, other: Score) -> bool {
        let exact = || {
            let lhs = self.gap.checked_mul(self.gap)?.checked_mul(other.den)?;
            let rhs = other.gap.checked_mul(other.gap)?.checked_mul(self.den)?;
            Some(lhs > rhs)
        };
        exact().unwrap_or_else(|| {
            let (g0, g1) = (BigUint::from(self.gap), BigUint::from(other.gap));
            &g0 * &g0 * other.den > &g1 * &g1 * self.den
        })
    }
}

/// Otsu cut over a prebuilt histogram. Ties go to the smaller threshold.
pub fn otsu_from_histogram(hist: &[u64; OTSU_BINS]) -> Result<OtsuResult> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(Error::EmptyRegion("otsu on zero samples"));
    }
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    if occupied <= 1 {
        return Ok(OtsuResult {
            threshold: 0.0,
            cut_bin: 0,
            degenerate: true,
        });
    }
    let sum_total: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, Score)> = None;
    for (k, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        n0 += c;
        s0 += k as u64 * c;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let score = Score::new(n0, s0, n1, sum_total - s0);
        if best.is_none_or(|(_, b)| score.greater_than(b)) {
            best = Some((k, score));
        }
    }
    let (cut_bin, _) = best.expect("two occupied bins admit a cut");
    Ok(OtsuResult {
        threshold: bin_upper_edge(cut_bin),
        cut_bin,
        degenerate: false,
    })
}

pub fn otsu_threshold(values: &[f64]) -> Result<OtsuResult> {
    if values.is_empty() {
        return Err(Error::EmptyRegion("otsu on zero samples"));
    }
    otsu_from_histogram(&otsu_histogram(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActConfig {
    pub w_global: f64,
    pub w_edge: f64,
    /// Degrees.
    pub theta_min: f64,
    /// Degrees.
    pub theta_max: f64,
    /// Minimum dilated edge-band size; `None` means `max(256, 0.005*H*W)`.
    #[serde(default)]
    pub n_min: Option<usize>,
    pub dilation_iterations: usize,
}

impl Default for ActConfig {
    fn default() -> Self {
        ActConfig {
            w_global: 0.7,
            w_edge: 0.3,
            theta_min: 90.0,
            theta_max: 150.0,
            n_min: None,
            dilation_iterations: 1,
        }
    }
}

impl ActConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_global >= 0.0 && self.w_edge >= 0.0)
            || (self.w_global + self.w_edge - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidConfig(format!(
                "act weights must be >= 0 and sum to 1, got {} + {}",
                self.w_global, self.w_edge
            )));
        }
        if !(self.theta_min > 0.0 && self.theta_min < self.theta_max && self.theta_max <= 180.0) {
            return Err(Error::InvalidConfig(format!(
                "act angles need 0 < theta_min < theta_max <= 180, got {} .. {}",
                self.theta_min, self.theta_max
            )));
        }
        Ok(())
    }

    pub fn min_edge_pixels(&self, height: usize, width: usize) -> usize {
        self.n_min
            .unwrap_or_else(|| 256.max((0.005 * (height * width) as f64).ceil() as usize))
    }
}

/// Edge-band Otsu threshold and the band size. `None` when the band is too
/// small, the map is degenerate, or the band values are single-valued.
pub fn edge_local_threshold(d: &DifferenceMap, config: &ActConfig) -> (Option<f64>, usize) {
    if d.degenerate {
        return (None, 0);
    }
    let (h, w) = d.values.dims();
    let Ok(grad) = sobel_magnitude(&d.values) else {
        return (None, 0);
    };
    let peak = grad.data().iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return (None, 0);
    }
    let scaled: Vec<f64> = grad.data().iter().map(|&g| g / peak).collect();
    let cut = otsu_threshold(&scaled).expect("nonempty grid");
    let edges: Vec<bool> = if cut.degenerate {
        grad.data().iter().map(|&g| g > 0.0).collect()
    } else {
        scaled.iter().map(|&g| otsu_bin(g) > cut.cut_bin).collect()
    };
    let edges = Grid::from_vec(h, w, edges).expect("same dims");
    let band = dilate_grid(&edges, config.dilation_iterations);
    let samples: Vec<f64> = band
        .data()
        .iter()
        .zip(d.values.data())
        .filter_map(|(&e, &v)| e.then_some(v))
        .collect();
    let count = samples.len();
    if count == 0 || count < config.min_edge_pixels(h, w) {
        return (None, count);
    }
    match otsu_threshold(&samples) {
        Ok(r) if !r.degenerate => (Some(r.threshold), count),
        _ => (None, count),
    }
}

pub fn fuse_thresholds(tau_global: f64, tau_edge: Option<f64>, config: &ActConfig) -> f64 {
    match tau_edge {
        Some(te) => config.w_global * tau_global + config.w_edge * te,
        None => tau_global,
    }
}

/// Linear map of `tau` in `[0,1]` onto `[theta_min, theta_max]` degrees.
pub fn map_to_angle(tau_final: f64, config: &ActConfig) -> f64 {
    config.theta_min + tau_final * (config.theta_max - config.theta_min)
}

/// Similarity cut `cos(180° - θ)`.
pub fn decision_cut(theta_degrees: f64) -> f64 {
    (180.0 - theta_degrees).to_radians().cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdBundle {
    pub tau_global: f64,
    pub global_degenerate: bool,
    pub tau_edge: Option<f64>,
    pub edge_pixel_count: usize,
    pub tau_final: f64,
    pub theta: f64,
    pub cut: f64,
}

pub fn compute_thresholds(d: &DifferenceMap, config: &ActConfig) -> ThresholdBundle {
    let global = otsu_threshold(d.values.data()).expect("nonempty map");
    let (tau_edge, edge_pixel_count) = edge_local_threshold(d, config);
    let tau_final = fuse_thresholds(global.threshold, tau_edge, config);
    let theta = map_to_angle(tau_final, config);
    ThresholdBundle {
        tau_global: global.threshold,
        global_degenerate: global.degenerate,
        tau_edge,
        edge_pixel_count,
        tau_final,
        theta,
        cut: decision_cut(theta),
    }
}

/// Per-channel mean of `features` over the set pixels of `mask`.
pub fn mask_pool(features: &DenseFeatureMap, mask: &BinaryMask) -> Result<Vec<f64>> {
    if (features.height(), features.width()) != mask.dims() {
        return Err(Error::DimensionMismatch(format!(
            "features {}x{} vs mask {:?}",
            features.height(),
            features.width(),
            mask.dims()
        )));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyRegion("pooling over an empty mask"));
    }
    Ok((0..features.channels())
        .map(|c| {
            let plane = features.channel(c);
            let mut sum = 0.0f64;
            for range in mask.set_ranges() {
                for &v in &plane[range] {
                    sum += v as f64;
                }
            }
            sum / count as f64
        })
        .collect())
}

/// `u·v / (|u||v|)`, or `None` if either vector has zero norm.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Option<f64> {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    if u == v {
        // Exact, so unchanged regions can never pass a cut of 1.
        return Some(1.0);
    }
    Some((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionScore {
    pub id: usize,
    pub pooled_a: Vec<f64>,
    pub pooled_b: Vec<f64>,
    /// `None` when a pooled vector had zero norm (treated as no change).
    pub similarity: Option<f64>,
}

/// Pool both phases over every mask and score their similarity, in id order.
pub fn score_regions(
    masks: &MaskSet,
    fa: &DenseFeatureMap,
    fb: &DenseFeatureMap,
) -> Result<Vec<RegionScore>> {
    masks
        .masks()
        .par_iter()
        .enumerate()
        .map(|(id, mask)| {
            let pooled_a = mask_pool(fa, mask)?;
            let pooled_b = mask_pool(fb, mask)?;
            let similarity = cosine_similarity(&pooled_a, &pooled_b);
            if similarity.is_none() {
                log::warn!("mask {id}: zero-norm pooled feature, treated as unchanged");
            }
            Ok(RegionScore {
                id,
                pooled_a,
                pooled_b,
                similarity,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    /// Similarity cut the members were selected against.
    pub cut: f64,
    pub members: Vec<RegionScore>,
}

impl CandidateSet {
    pub fn ids(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.id).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Keep scores with `similarity < cut`; degenerate scores never qualify.
pub fn select_by_cut(scores: &[RegionScore], cut: f64) -> CandidateSet {
    CandidateSet {
        cut,
        members: scores
            .iter()
            .filter(|s| s.similarity.is_some_and(|v| v < cut))
            .cloned()
            .collect(),
    }
}

pub fn select_candidates(
    s_all: &MaskSet,
    fa: &DenseFeatureMap,
    fb: &DenseFeatureMap,
    theta_threshold: f64,
) -> Result<CandidateSet> {
    let scores = score_regions(s_all, fa, fb)?;
    Ok(select_by_cut(&scores, decision_cut(theta_threshold)))
}
