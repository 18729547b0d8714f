use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use super::subprocess::{self, Request, Task};
use super::{timeout, EmbeddingProviderSpec};
use crate::error::{Error, Result};
use crate::formats::embeddings::{self, mask_key, text_key, EmbeddingManifest};
use crate::imaging::{io, BBox, Image};

/// L2-normalised embedding, or a flagged zero vector when the input had no
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    components: Vec<f64>,
    degenerate: bool,
}

impl UnitVector {
    pub fn normalize(raw: &[f64]) -> Self {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            UnitVector {
                components: vec![0.0; raw.len()],
                degenerate: true,
            }
        } else {
            UnitVector {
                components: raw.iter().map(|v| v / norm).collect(),
                degenerate: false,
            }
        }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Cosine similarity; `None` when either side is degenerate.
    pub fn cosine(&self, other: &UnitVector) -> Option<f64> {
        if self.degenerate || other.degenerate {
            return None;
        }
        Some(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .clamp(-1.0, 1.0),
        )
    }
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Region and text embedding behind a provider spec. Text embeddings and the
/// file manifest are memoised for the lifetime of the instance.
#[derive(Debug)]
pub struct Embedder {
    spec: EmbeddingProviderSpec,
    manifest: OnceLock<EmbeddingManifest>,
    text_cache: Mutex<BTreeMap<String, UnitVector>>,
    gate: Mutex<()>,
}

impl Embedder {
    pub fn new(spec: EmbeddingProviderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Embedder {
            spec,
            manifest: OnceLock::new(),
            text_cache: Mutex::new(BTreeMap::new()),
            gate: Mutex::new(()),
        })
    }

    pub fn spec(&self) -> &EmbeddingProviderSpec {
        &self.spec
    }

    fn manifest(&self, path: &str) -> Result<&EmbeddingManifest> {
        if let Some(m) = self.manifest.get() {
            return Ok(m);
        }
        let m = embeddings::read(std::path::Path::new(path))?;
        Ok(self.manifest.get_or_init(|| m))
    }

    fn run_subprocess(
        &self,
        command: &[String],
        dim: usize,
        timeout_secs: f64,
        crop: Option<&Image>,
        text: Option<&str>,
    ) -> Result<Vec<f64>> {
        let _guard = self.gate.lock().unwrap_or_else(|p| p.into_inner());
        let dir = tempfile::tempdir().map_err(|e| Error::Subprocess(e.to_string()))?;
        let input = dir.path().join("crop.png");
        if let Some(crop) = crop {
            io::write_image(crop, &input)?;
        }
        let out = dir.path().join("out.emb.json");
        let req = Request {
            image: crop.map(|_| input.as_path()),
            crop: crop.map(|c| BBox::new(0, 0, c.height(), c.width())),
            text,
        };
        subprocess::invoke(command, timeout(timeout_secs), Task::Embed, &req, &out)?;
        let m = embeddings::read(&out)?;
        if m.dim != dim || m.entries.len() != 1 {
            return Err(Error::Subprocess(format!(
                "expected one entry of dim {dim}, got {} entries of dim {}",
                m.entries.len(),
                m.dim
            )));
        }
        Ok(to_f64(m.entries.values().next().expect("one entry")))
    }

    /// Embed a cropped region; `key` is the region's mask id in the merged set.
    pub fn embed_region(&self, crop: &Image, key: usize) -> Result<UnitVector> {
        let raw = match &self.spec {
            EmbeddingProviderSpec::SyntheticColor { .. } => {
                let mut sum = [0u64; 3];
                for px in crop.data().chunks_exact(3) {
                    for c in 0..3 {
                        sum[c] += px[c] as u64;
                    }
                }
                let n = (crop.height() * crop.width()) as f64 * 255.0;
                sum.iter().map(|&s| s as f64 / n).collect::<Vec<_>>()
            }
            EmbeddingProviderSpec::File { manifest } => {
                let k = mask_key(key);
                to_f64(
                    self.manifest(manifest)?
                        .get(&k)
                        .ok_or(Error::MissingKey(k))?,
                )
            }
            EmbeddingProviderSpec::Subprocess {
                command,
                dim,
                timeout_secs,
            } => self.run_subprocess(command, *dim, *timeout_secs, Some(crop), None)?,
        };
        Ok(UnitVector::normalize(&raw))
    }

    pub fn embed_text(&self, prototype: &str) -> Result<UnitVector> {
        if prototype.is_empty() {
            return Err(Error::MissingPrototype(String::new()));
        }
        if let Some(v) = self.text_cache.lock().unwrap().get(prototype) {
            return Ok(v.clone());
        }
        let raw = match &self.spec {
            EmbeddingProviderSpec::SyntheticColor { anchors } => anchors
                .get(prototype)
                .ok_or_else(|| Error::MissingPrototype(prototype.to_string()))?
                .to_vec(),
            EmbeddingProviderSpec::File { manifest } => to_f64(
                self.manifest(manifest)?
                    .get(&text_key(prototype))
                    .ok_or_else(|| Error::MissingPrototype(prototype.to_string()))?,
            ),
            EmbeddingProviderSpec::Subprocess {
                command,
                dim,
                timeout_secs,
            } => self.run_subprocess(command, *dim, *timeout_secs, None, Some(prototype))?,
        };
        let v = UnitVector::normalize(&raw);
        self.text_cache
            .lock()
            .unwrap()
            .insert(prototype.to_string(), v.clone());
        Ok(v)
    }
}
