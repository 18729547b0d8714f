use crate::error::{Error, Result};

/// Channel-major `C x H x W` real-valued feature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DenseFeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::CorruptFeature(format!(
                "dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::CorruptFeature(format!(
                "payload length {} != {channels}*{height}*{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::CorruptFeature(format!(
                "non-finite value at flat index {i}"
            )));
        }
        Ok(DenseFeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn value(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.height + row) * self.width + col]
    }

    /// Feature vector at one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> Vec<f32> {
        (0..self.channels).map(|c| self.value(c, row, col)).collect()
    }
}

/// Source coordinate and blend weights for one output index under
/// half-pixel-centre mapping.
fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let x = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let x0 = x.floor() as usize;
    let x1 = (x0 + 1).min(src_len - 1);
    (x0, x1, x - x0 as f64)
}

/// Bilinear resampling to `(height, width)` with align-corners off.
pub fn bilinear_upsample(
    map: &DenseFeatureMap,
    target: (usize, usize),
) -> Result<DenseFeatureMap> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::DimensionMismatch(format!(
            "upsample target must be positive, got {th}x{tw}"
        )));
    }
    if (th, tw) == (map.height, map.width) {
        return Ok(map.clone());
    }
    let rows: Vec<_> = (0..th).map(|r| sample_axis(r, map.height, th)).collect();
    let cols: Vec<_> = (0..tw).map(|c| sample_axis(c, map.width, tw)).collect();
    let mut data = Vec::with_capacity(map.channels * th * tw);
    for c in 0..map.channels {
        for &(r0, r1, fy) in &rows {
            for &(c0, c1, fx) in &cols {
                let v00 = map.value(c, r0, c0) as f64;
                let v01 = map.value(c, r0, c1) as f64;
                let v10 = map.value(c, r1, c0) as f64;
                let v11 = map.value(c, r1, c1) as f64;
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bottom = v10 * (1.0 - fx) + v11 * fx;
                data.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    DenseFeatureMap::new(map.channels, th, tw, data)
}
