use std::sync::Mutex;

use super::subprocess::{self, Request, Task};
use super::{phase_path, timeout, SegmentationProviderSpec};
use crate::error::{Error, Result};
use crate::formats::masks;
use crate::imaging::{io, BBox, BinaryMask, Image, MaskSet, Phase};

/// Row-major `tile x tile` partition; edge tiles are truncated.
pub fn grid_tiles(height: usize, width: usize, tile: usize) -> Vec<BinaryMask> {
    let mut out = Vec::new();
    for row0 in (0..height).step_by(tile) {
        for col0 in (0..width).step_by(tile) {
            let bbox = BBox::new(row0, col0, (row0 + tile).min(height), (col0 + tile).min(width));
            out.push(BinaryMask::rect(height, width, bbox).expect("tile inside frame"));
        }
    }
    out
}

/// Class-agnostic instance segmentation behind a provider spec.
#[derive(Debug)]
pub struct Segmenter {
    spec: SegmentationProviderSpec,
    gate: Mutex<()>,
}

impl Segmenter {
    pub fn new(spec: SegmentationProviderSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Segmenter {
            spec,
            gate: Mutex::new(()),
        })
    }

    pub fn spec(&self) -> &SegmentationProviderSpec {
        &self.spec
    }

    pub fn segment(&self, image: &Image, phase: Phase) -> Result<MaskSet> {
        let (h, w) = image.dims();
        let set = match &self.spec {
            SegmentationProviderSpec::SyntheticGrid { tile } => {
                MaskSet::from_masks(h, w, grid_tiles(h, w, *tile), phase)?
            }
            SegmentationProviderSpec::File { manifest } => {
                masks::read(&phase_path(manifest, phase))?.into_mask_set(phase)?
            }
            SegmentationProviderSpec::Subprocess {
                command,
                timeout_secs,
            } => {
                let _guard = self.gate.lock().unwrap_or_else(|p| p.into_inner());
                let dir = tempfile::tempdir().map_err(|e| Error::Subprocess(e.to_string()))?;
                let input = dir.path().join("image.png");
                io::write_image(image, &input)?;
                let out = dir.path().join("out.masks.json");
                let req = Request {
                    image: Some(&input),
                    ..Request::default()
                };
                subprocess::invoke(command, timeout(*timeout_secs), Task::Segment, &req, &out)?;
                masks::read(&out)?.into_mask_set(phase)?
            }
        };
        if set.dims() != (h, w) {
            return Err(Error::DimensionMismatch(format!(
                "segmentation manifest is {:?}, image is {:?}",
                set.dims(),
                (h, w)
            )));
        }
        Ok(set)
    }
}
