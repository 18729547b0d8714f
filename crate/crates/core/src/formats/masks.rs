//! Mask manifest (`.masks.json`):
//! `{"height":H,"width":W,"instances":[{"id":0,"rle":[...]}, ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, MaskSet, Phase};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    id: u64,
    rle: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    height: usize,
    width: usize,
    instances: Vec<RawInstance>,
}

/// Parsed manifest; `instances[i]` has id `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskManifest {
    pub height: usize,
    pub width: usize,
    pub instances: Vec<BinaryMask>,
}

impl MaskManifest {
    pub fn from_mask_set(set: &MaskSet) -> Self {
        let (height, width) = set.dims();
        MaskManifest {
            height,
            width,
            instances: set.masks().to_vec(),
        }
    }

    pub fn single(mask: &BinaryMask) -> Self {
        MaskManifest {
            height: mask.height(),
            width: mask.width(),
            instances: vec![mask.clone()],
        }
    }

    pub fn into_mask_set(self, phase: Phase) -> Result<MaskSet> {
        MaskSet::from_masks(self.height, self.width, self.instances, phase)
    }
}

pub fn encode(manifest: &MaskManifest) -> Vec<u8> {
    let raw = RawManifest {
        height: manifest.height,
        width: manifest.width,
        instances: manifest
            .instances
            .iter()
            .enumerate()
            .map(|(i, m)| RawInstance {
                id: i as u64,
                rle: m.runs().to_vec(),
            })
            .collect(),
    };
    serde_json::to_vec(&raw).expect("manifest serializes")
}

pub fn decode(bytes: &[u8]) -> Result<MaskManifest> {
    let raw: RawManifest =
        serde_json::from_slice(bytes).map_err(|e| Error::format("masks.json", e.to_string()))?;
    if raw.height == 0 || raw.width == 0 {
        return Err(Error::format("masks.json", "height and width must be positive"));
    }
    if raw.height.checked_mul(raw.width).is_none_or(|n| n > u32::MAX as usize) {
        return Err(Error::format("masks.json", "frame too large"));
    }
    let n = raw.instances.len();
    let mut slots: Vec<Option<BinaryMask>> = vec![None; n];
    for inst in raw.instances {
        let id = inst.id;
        let slot = usize::try_from(id)
            .ok()
            .and_then(|i| slots.get_mut(i))
            .ok_or_else(|| {
                Error::format("masks.json", format!("instance id {id}: ids must be dense 0..{n}"))
            })?;
        if slot.is_some() {
            return Err(Error::format(
                "masks.json",
                format!("instance id {id}: duplicate id"),
            ));
        }
        let mask = BinaryMask::from_runs(raw.height, raw.width, inst.rle)
            .map_err(|e| Error::format("masks.json", format!("instance id {id}: {e}")))?;
        *slot = Some(mask);
    }
    Ok(MaskManifest {
        height: raw.height,
        width: raw.width,
        instances: slots.into_iter().map(|m| m.expect("all slots filled")).collect(),
    })
}

pub fn read(path: &Path) -> Result<MaskManifest> {
    decode(&super::read_bytes(path)?)
}

pub fn write(manifest: &MaskManifest, path: &Path) -> Result<()> {
    super::write_bytes(path, &encode(manifest))
}
