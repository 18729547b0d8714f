use std::sync::Mutex;

use super::subprocess::{self, Request, Task};
use super::{phase_path, timeout, FeatureProviderSpec};
use crate::error::{Error, Result};
use crate::formats::dfm;
use crate::imaging::{box_blur, io, sobel_magnitude, DenseFeatureMap, Grid, Image, Phase};

/// Four-channel deterministic features: box-blurred R, G, B in `[0,1]` and
/// the Sobel magnitude of luminance `(0.299R + 0.587G + 0.114B) / 255`.
pub fn synthetic_features(image: &Image, blur_radius: usize) -> Result<DenseFeatureMap> {
    let (h, w) = image.dims();
    let channel = |c: usize| {
        Grid::from_fn(h, w, |r, col| image.pixel(r, col)[c] as f64 / 255.0)
    };
    let luma = Grid::from_fn(h, w, |r, col| {
        let [red, green, blue] = image.pixel(r, col);
        (0.299 * red as f64 + 0.587 * green as f64 + 0.114 * blue as f64) / 255.0
    });
    let grad = sobel_magnitude(&luma)?;
    let mut data = Vec::with_capacity(4 * h * w);
    for c in 0..3 {
        data.extend(box_blur(&channel(c), blur_radius).data().iter().map(|&v| v as f32));
    }
    data.extend(grad.data().iter().map(|&v| v as f32));
    DenseFeatureMap::new(4, h, w, data)
}

/// Dense feature extraction behind a provider spec.
#[derive(Debug)]
pub struct FeatureExtractor {
    spec: FeatureProviderSpec,
    gate: Mutex<()>,
}

impl FeatureExtractor {
    pub fn new(spec: FeatureProviderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(FeatureExtractor {
            spec,
            gate: Mutex::new(()),
        })
    }

    pub fn spec(&self) -> &FeatureProviderSpec {
        &self.spec
    }

    /// Features at the provider's native resolution; callers upsample.
    pub fn extract(&self, image: &Image, phase: Phase) -> Result<DenseFeatureMap> {
        match &self.spec {
            FeatureProviderSpec::Synthetic { blur_radius } => {
                synthetic_features(image, *blur_radius)
            }
            FeatureProviderSpec::File { path } => dfm::read(&phase_path(path, phase)),
            FeatureProviderSpec::Subprocess {
                command,
                timeout_secs,
            } => {
                let _guard = self.gate.lock().unwrap_or_else(|p| p.into_inner());
                let dir = tempfile::tempdir().map_err(|e| Error::Subprocess(e.to_string()))?;
                let input = dir.path().join("image.png");
                io::write_image(image, &input)?;
                let out = dir.path().join("out.dfm");
                let req = Request {
                    image: Some(&input),
                    ..Request::default()
                };
                subprocess::invoke(command, timeout(*timeout_secs), Task::Features, &req, &out)?;
                dfm::read(&out)
            }
        }
    }
}
