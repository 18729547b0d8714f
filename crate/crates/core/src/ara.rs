//! Adaptive radiometric alignment.
//!
//! The post-event image is histogram-matched per channel onto the pre-event
//! image, then blended back toward the original so that no pixel moves by
//! more than `tau_max` of the full intensity range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;

/// Cumulative distribution of one 8-bit channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCdf {
    /// Pixels with intensity `<= v`.
    cumulative: [u64; 256],
    total: u64,
}

impl ChannelCdf {
    pub fn value(&self, v: u8) -> f64 {
        self.cumulative[v as usize] as f64 / self.total as f64
    }

    pub fn cumulative_counts(&self) -> &[u64; 256] {
        &self.cumulative
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

pub fn compute_cdf(image: &Image) -> [ChannelCdf; 3] {
    let mut hist = [[0u64; 256]; 3];
    for px in image.data().chunks_exact(3) {
        for c in 0..3 {
            hist[c][px[c] as usize] += 1;
        }
    }
    let total = (image.height() * image.width()) as u64;
    hist.map(|h| {
        let mut cumulative = [0u64; 256];
        let mut acc = 0;
        for v in 0..256 {
            acc += h[v];
            cumulative[v] = acc;
        }
        ChannelCdf { cumulative, total }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AraConfig {
    /// Largest allowed per-pixel correction as a fraction of 255.
    pub tau_max: f64,
}

impl Default for AraConfig {
    fn default() -> Self {
        AraConfig { tau_max: 0.25 }
    }
}

impl AraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0 && self.tau_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ara.tau_max must be in (0,1], got {}",
                self.tau_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AraResult {
    pub aligned: Image,
    pub transferred: Image,
    pub delta_max: f64,
    pub alpha: f64,
}

/// Per-channel lookup tables `T_c(v) = min { u : CDF_ref(u) >= CDF_src(v) }`.
///
/// Both images have the same pixel count, so the comparison is done on exact
/// cumulative counts.
pub fn transfer_tables(source: &Image, reference: &Image) -> Result<[[u8; 256]; 3]> {
    source.same_dims(reference, "radiometric transfer")?;
    let src = compute_cdf(source);
    let reference = compute_cdf(reference);
    let mut tables = [[0u8; 256]; 3];
    for c in 0..3 {
        let target = &reference[c].cumulative;
        let mut u = 0usize;
        for v in 0..256 {
            // src cumulative counts are nondecreasing, so u only moves forward.
            let want = src[c].cumulative[v];
            while target[u] < want {
                u += 1;
            }
            tables[c][v] = u as u8;
        }
    }
    Ok(tables)
}

/// Histogram-match `source` onto `reference`, channel by channel.
pub fn radiometric_transfer(source: &Image, reference: &Image) -> Result<Image> {
    let tables = transfer_tables(source, reference)?;
    let mut out = source.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = tables[c][px[c] as usize];
        }
    }
    Ok(out)
}

/// Blend `transferred` toward `original` so the largest correction is capped.
pub fn adaptive_mix(transferred: &Image, original: &Image, config: &AraConfig) -> Result<AraResult> {
    config.validate()?;
    transferred.same_dims(original, "adaptive mix")?;
    let max_abs = transferred
        .data()
        .iter()
        .zip(original.data())
        .map(|(&t, &o)| t.abs_diff(o))
        .max()
        .unwrap_or(0);
    let delta_max = max_abs as f64 / 255.0;
    let alpha = if max_abs == 0 {
        1.0
    } else {
        (config.tau_max / delta_max).min(1.0)
    };
    let data = transferred
        .data()
        .iter()
        .zip(original.data())
        .map(|(&t, &o)| {
            let v = alpha * t as f64 + (1.0 - alpha) * o as f64;
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(AraResult {
        aligned: Image::new(original.height(), original.width(), data)?,
        transferred: transferred.clone(),
        delta_max,
        alpha,
    })
}

/// Align `image_b` to `image_a`: transfer, then adaptive mixing.
pub fn align(image_a: &Image, image_b: &Image, config: &AraConfig) -> Result<AraResult> {
    let transferred = radiometric_transfer(image_b, image_a)?;
    adaptive_mix(&transferred, image_b, config)
}
