//! Embedding manifest (`.emb.json`):
//! `{"dim":d,"entries":{"mask:<id>":[...], "text:<prototype>":[...]}}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingManifest {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<f32>>,
}

pub fn mask_key(id: usize) -> String {
    format!("mask:{id}")
}

pub fn text_key(prototype: &str) -> String {
    format!("text:{prototype}")
}

impl EmbeddingManifest {
    pub fn new(dim: usize) -> Self {
        EmbeddingManifest {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: String, vector: Vec<f32>) -> Result<()> {
        check_entry(self.dim, &key, &vector)?;
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::format("emb.json", "dim must be >= 1"));
        }
        for (k, v) in &self.entries {
            check_entry(self.dim, k, v)?;
        }
        Ok(())
    }
}

fn check_entry(dim: usize, key: &str, vector: &[f32]) -> Result<()> {
    let valid_key = match key.split_once(':') {
        Some(("mask", id)) => id.parse::<u64>().is_ok(),
        Some(("text", s)) => !s.is_empty(),
        _ => false,
    };
    if !valid_key {
        return Err(Error::format(
            "emb.json",
            format!("entry {key:?}: key must be mask:<id> or text:<string>"),
        ));
    }
    if vector.len() != dim {
        return Err(Error::format(
            "emb.json",
            format!("entry {key:?}: length {} != dim {dim}", vector.len()),
        ));
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(
            "emb.json",
            format!("entry {key:?}: non-finite component"),
        ));
    }
    Ok(())
}

pub fn encode(manifest: &EmbeddingManifest) -> Vec<u8> {
    serde_json::to_vec(manifest).expect("manifest serializes")
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddingManifest> {
    let m: EmbeddingManifest =
        serde_json::from_slice(bytes).map_err(|e| Error::format("emb.json", e.to_string()))?;
    m.validate()?;
    Ok(m)
}

pub fn read(path: &Path) -> Result<EmbeddingManifest> {
    decode(&super::read_bytes(path)?)
}

pub fn write(manifest: &EmbeddingManifest, path: &Path) -> Result<()> {
    super::write_bytes(path, &encode(manifest))
}
