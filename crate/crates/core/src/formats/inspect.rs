//! Validation and human-readable summaries for provider files.

use std::fmt::Write as _;
use std::path::Path;

use super::{dfm, embeddings, masks};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Dfm,
    Masks,
    Embeddings,
}

impl FileKind {
    pub fn from_path(path: &Path) -> Option<FileKind> {
        let name = path.file_name()?.to_str()?;
        if name.ends_with(".dfm") {
            Some(FileKind::Dfm)
        } else if name.ends_with(".masks.json") {
            Some(FileKind::Masks)
        } else if name.ends_with(".emb.json") {
            Some(FileKind::Embeddings)
        } else {
            None
        }
    }
}

pub fn inspect_file(path: &Path) -> Result<String> {
    let kind = FileKind::from_path(path).ok_or_else(|| {
        Error::format(
            "inspect",
            format!("unrecognised extension on {}", path.display()),
        )
    })?;
    inspect_bytes(kind, &super::read_bytes(path)?)
}

/// Parse `bytes` as `kind`, check every invariant, and summarise.
pub fn inspect_bytes(kind: FileKind, bytes: &[u8]) -> Result<String> {
    let mut out = String::new();
    match kind {
        FileKind::Dfm => {
            let map = dfm::decode(bytes)?;
            let (lo, hi) = map
                .data()
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            writeln!(out, "format: dfm").unwrap();
            writeln!(out, "channels: {}", map.channels()).unwrap();
            writeln!(out, "height: {}", map.height()).unwrap();
            writeln!(out, "width: {}", map.width()).unwrap();
            writeln!(out, "min: {lo}").unwrap();
            writeln!(out, "max: {hi}").unwrap();
        }
        FileKind::Masks => {
            let m = masks::decode(bytes)?;
            let areas: Vec<usize> = m.instances.iter().map(|i| i.count()).collect();
            writeln!(out, "format: masks.json").unwrap();
            writeln!(out, "height: {}", m.height).unwrap();
            writeln!(out, "width: {}", m.width).unwrap();
            writeln!(out, "instances: {}", m.instances.len()).unwrap();
            writeln!(out, "empty instances: {}", areas.iter().filter(|&&a| a == 0).count())
                .unwrap();
            if let (Some(lo), Some(hi)) = (areas.iter().min(), areas.iter().max()) {
                writeln!(out, "area min: {lo}").unwrap();
                writeln!(out, "area max: {hi}").unwrap();
            }
        }
        FileKind::Embeddings => {
            let m = embeddings::decode(bytes)?;
            let masks = m.entries.keys().filter(|k| k.starts_with("mask:")).count();
            writeln!(out, "format: emb.json").unwrap();
            writeln!(out, "dim: {}", m.dim).unwrap();
            writeln!(out, "entries: {}", m.entries.len()).unwrap();
            writeln!(out, "mask entries: {masks}").unwrap();
            writeln!(out, "text entries: {}", m.entries.len() - masks).unwrap();
            let norms: Vec<f64> = m
                .entries
                .values()
                .map(|v| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt())
                .collect();
            if !norms.is_empty() {
                let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                writeln!(out, "norm min: {lo:.6}").unwrap();
                writeln!(out, "norm max: {hi:.6}").unwrap();
            }
        }
    }
    Ok(out)
}
