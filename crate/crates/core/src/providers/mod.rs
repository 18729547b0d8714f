//! Pluggable stand-ins for the foundation models: instance segmentation,
//! dense features and region/text embeddings.
//!
//! Every role has three realisations. `file` kinds read precomputed outputs,
//! synthetic kinds are small deterministic image operators, and `subprocess`
//! kinds shell out to an external model runner over the file protocol in
//! [`subprocess`].

mod embedding;
mod features;
mod flag;
mod segmentation;
pub mod subprocess;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use embedding::{Embedder, UnitVector};
pub use flag::{EmbeddingChoice, ProviderSelection};
pub use features::{synthetic_features, FeatureExtractor};
pub use segmentation::{grid_tiles, Segmenter};

use crate::error::{Error, Result};
use crate::imaging::Phase;

/// Placeholder substituted with `a` or `b` in file-provider paths.
pub const PHASE_PLACEHOLDER: &str = "{phase}";

pub(crate) fn phase_path(template: &str, phase: Phase) -> PathBuf {
    PathBuf::from(template.replace(PHASE_PLACEHOLDER, phase.tag()))
}

fn default_timeout() -> f64 {
    600.0
}

fn check_subprocess(command: &[String], timeout_secs: f64) -> Result<()> {
    if command.is_empty() {
        return Err(Error::InvalidConfig("subprocess command is empty".into()));
    }
    if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "subprocess timeout must be > 0, got {timeout_secs}"
        )));
    }
    Ok(())
}

pub(crate) fn timeout(secs: f64) -> Duration {
    Duration::from_secs_f64(secs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SegmentationProviderSpec {
    /// Precomputed `.masks.json`; `{phase}` in the path expands to `a`/`b`.
    File { manifest: String },
    /// Axis-aligned `tile x tile` partition of the frame.
    SyntheticGrid { tile: usize },
    Subprocess {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

impl SegmentationProviderSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SegmentationProviderSpec::File { manifest } if manifest.is_empty() => {
                Err(Error::InvalidConfig("segmentation manifest path is empty".into()))
            }
            SegmentationProviderSpec::SyntheticGrid { tile } if *tile < 4 => Err(
                Error::InvalidConfig(format!("grid tile size must be >= 4, got {tile}")),
            ),
            SegmentationProviderSpec::Subprocess {
                command,
                timeout_secs,
            } => check_subprocess(command, *timeout_secs),
            _ => Ok(()),
        }
    }
}

fn default_blur_radius() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureProviderSpec {
    /// Precomputed `.dfm`; `{phase}` in the path expands to `a`/`b`.
    File { path: String },
    /// Box-blurred RGB plus luminance gradient magnitude.
    Synthetic {
        #[serde(default = "default_blur_radius")]
        blur_radius: usize,
    },
    Subprocess {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

impl FeatureProviderSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FeatureProviderSpec::File { path } if path.is_empty() => {
                Err(Error::InvalidConfig("feature file path is empty".into()))
            }
            FeatureProviderSpec::Subprocess {
                command,
                timeout_secs,
            } => check_subprocess(command, *timeout_secs),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbeddingProviderSpec {
    /// Precomputed `.emb.json` keyed by `mask:<id>` and `text:<prototype>`.
    File { manifest: String },
    /// Mean crop colour for regions, an RGB anchor per prototype for text.
    SyntheticColor { anchors: BTreeMap<String, [f64; 3]> },
    Subprocess {
        command: Vec<String>,
        dim: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

impl EmbeddingProviderSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EmbeddingProviderSpec::File { manifest } if manifest.is_empty() => {
                Err(Error::InvalidConfig("embedding manifest path is empty".into()))
            }
            EmbeddingProviderSpec::SyntheticColor { anchors } => {
                for (name, rgb) in anchors {
                    if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::InvalidConfig(format!(
                            "anchor {name:?} components must lie in [0,1]"
                        )));
                    }
                }
                Ok(())
            }
            EmbeddingProviderSpec::Subprocess {
                command,
                dim,
                timeout_secs,
            } => {
                if *dim == 0 {
                    return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
                }
                check_subprocess(command, *timeout_secs)
            }
            _ => Ok(()),
        }
    }
}
