//! The `--provider` selection grammar:
//! `seg=<kind>:<param>,feat=<kind>:<param>,emb=<kind>:<param>`.
//!
//! | role | kind             | param                              |
//! |------|------------------|------------------------------------|
//! | seg  | `file`           | masks manifest path (`{phase}`)    |
//! | seg  | `synthetic-grid` | tile size                          |
//! | seg  | `subprocess`     | whitespace-separated command       |
//! | feat | `file`           | `.dfm` path (`{phase}`)            |
//! | feat | `synthetic`      | blur radius, may be empty          |
//! | feat | `subprocess`     | command                            |
//! | emb  | `file`           | `.emb.json` path                   |
//! | emb  | `synthetic-color`| anchors JSON path                  |
//! | emb  | `subprocess`     | `<dim>:<command>`                  |
//!
//! Because entries are comma separated, commands cannot contain commas.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::{EmbeddingProviderSpec, FeatureProviderSpec, SegmentationProviderSpec};
use crate::error::{Error, Result};
use crate::formats;
use crate::pipeline::PipelineConfig;

/// Embedding selection before the anchor file (if any) has been read.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingChoice {
    Spec(EmbeddingProviderSpec),
    AnchorFile(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProviderSelection {
    pub segmentation: Option<SegmentationProviderSpec>,
    pub features: Option<FeatureProviderSpec>,
    pub embedding: Option<EmbeddingChoice>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(format!("--provider: {}", msg.into()))
}

fn command(param: &str) -> Result<Vec<String>> {
    let words: Vec<String> = param.split_whitespace().map(str::to_owned).collect();
    if words.is_empty() {
        return Err(bad("subprocess command is empty"));
    }
    Ok(words)
}

fn number(param: &str, what: &str) -> Result<usize> {
    param
        .trim()
        .parse()
        .map_err(|_| bad(format!("{what} must be a non-negative integer, got {param:?}")))
}

fn path(param: &str) -> Result<String> {
    if param.is_empty() {
        return Err(bad("path is empty"));
    }
    Ok(param.to_owned())
}

impl ProviderSelection {
    /// Pure parse; touches no files.
    pub fn parse(flag: &str) -> Result<Self> {
        let mut sel = ProviderSelection::default();
        for entry in flag.split(',') {
            let (role, rest) = entry
                .split_once('=')
                .ok_or_else(|| bad(format!("expected role=kind:param, got {entry:?}")))?;
            let (kind, param) = rest.split_once(':').unwrap_or((rest, ""));
            match role.trim() {
                "seg" => {
                    if sel.segmentation.is_some() {
                        return Err(bad("seg given twice"));
                    }
                    let spec = match kind {
                        "file" => SegmentationProviderSpec::File {
                            manifest: path(param)?,
                        },
                        "synthetic-grid" => SegmentationProviderSpec::SyntheticGrid {
                            tile: number(param, "grid tile")?,
                        },
                        "subprocess" => SegmentationProviderSpec::Subprocess {
                            command: command(param)?,
                            timeout_secs: super::default_timeout(),
                        },
                        other => return Err(bad(format!("unknown seg kind {other:?}"))),
                    };
                    spec.validate()?;
                    sel.segmentation = Some(spec);
                }
                "feat" => {
                    if sel.features.is_some() {
                        return Err(bad("feat given twice"));
                    }
                    let spec = match kind {
                        "file" => FeatureProviderSpec::File { path: path(param)? },
                        "synthetic" => FeatureProviderSpec::Synthetic {
                            blur_radius: if param.is_empty() {
                                super::default_blur_radius()
                            } else {
                                number(param, "blur radius")?
                            },
                        },
                        "subprocess" => FeatureProviderSpec::Subprocess {
                            command: command(param)?,
                            timeout_secs: super::default_timeout(),
                        },
                        other => return Err(bad(format!("unknown feat kind {other:?}"))),
                    };
                    spec.validate()?;
                    sel.features = Some(spec);
                }
                "emb" => {
                    if sel.embedding.is_some() {
                        return Err(bad("emb given twice"));
                    }
                    let choice = match kind {
                        "file" => EmbeddingChoice::Spec(EmbeddingProviderSpec::File {
                            manifest: path(param)?,
                        }),
                        "synthetic-color" => EmbeddingChoice::AnchorFile(path(param)?.into()),
                        "subprocess" => {
                            let (dim, cmd) = param
                                .split_once(':')
                                .ok_or_else(|| bad("emb subprocess param is <dim>:<command>"))?;
                            let spec = EmbeddingProviderSpec::Subprocess {
                                command: command(cmd)?,
                                dim: number(dim, "embedding dim")?,
                                timeout_secs: super::default_timeout(),
                            };
                            spec.validate()?;
                            EmbeddingChoice::Spec(spec)
                        }
                        other => return Err(bad(format!("unknown emb kind {other:?}"))),
                    };
                    sel.embedding = Some(choice);
                }
                other => return Err(bad(format!("unknown role {other:?}"))),
            }
        }
        Ok(sel)
    }

    /// Overwrite the chosen providers in `config`, reading anchor files.
    pub fn apply(self, config: &mut PipelineConfig) -> Result<()> {
        if let Some(s) = self.segmentation {
            config.segmentation = s;
        }
        if let Some(f) = self.features {
            config.features = f;
        }
        match self.embedding {
            Some(EmbeddingChoice::Spec(e)) => config.embedding = e,
            Some(EmbeddingChoice::AnchorFile(p)) => {
                let bytes = formats::read_bytes(&p)?;
                let anchors: BTreeMap<String, [f64; 3]> = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::format("anchors", format!("{}: {e}", p.display())))?;
                let spec = EmbeddingProviderSpec::SyntheticColor { anchors };
                spec.validate()?;
                config.embedding = spec;
            }
            None => {}
        }
        Ok(())
    }
}
