use serde::{Deserialize, Serialize};

use super::{BBox, BoolGrid, Grid};
use crate::error::{Error, Result};

/// Run-length encoded binary mask.
///
/// Runs alternate zeros and ones in row-major order and the first run always
/// counts zeros, so a mask whose first pixel is set starts with a `0` run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    runs: Vec<u32>,
}

impl BinaryMask {
    /// Validate raw runs against the mask invariants.
    pub fn from_runs(height: usize, width: usize, runs: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::MalformedMask(format!(
                "mask dims must be positive, got {height}x{width}"
            )));
        }
        if runs.windows(2).any(|w| w[0] == 0 && w[1] == 0) {
            return Err(Error::MalformedMask(
                "two consecutive zero-length runs".into(),
            ));
        }
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = (height as u64) * (width as u64);
        if total != expected {
            return Err(Error::MalformedMask(format!(
                "run-sum {total} != {height}*{width} = {expected}"
            )));
        }
        Ok(BinaryMask {
            height,
            width,
            runs,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask::from_runs(height, width, vec![(height * width) as u32])
            .expect("empty mask is valid")
    }

    pub fn full(height: usize, width: usize) -> Self {
        BinaryMask::from_runs(height, width, vec![0, (height * width) as u32])
            .expect("full mask is valid")
    }

    /// Axis-aligned rectangle mask.
    pub fn rect(height: usize, width: usize, bbox: BBox) -> Result<Self> {
        bbox.check_within(height, width)?;
        let grid = Grid::from_fn(height, width, |r, c| {
            r >= bbox.row0 && r < bbox.row1 && c >= bbox.col0 && c < bbox.col1
        });
        Ok(rle_encode(&grid))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Half-open linear index ranges of set pixels, in row-major order.
    pub fn set_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let mut pos = 0usize;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r as usize;
            (i % 2 == 1 && r > 0).then_some(start..pos)
        })
    }

    /// Linear indices of set pixels in row-major order.
    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.set_ranges().flatten()
    }

    pub fn to_grid(&self) -> BoolGrid {
        rle_decode(self).expect("validated mask decodes")
    }
}

/// Encode a dense grid into canonical runs.
pub fn rle_encode(grid: &BoolGrid) -> BinaryMask {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &v in grid.data() {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    runs.push(len);
    BinaryMask {
        height: grid.height(),
        width: grid.width(),
        runs,
    }
}

/// Expand runs into a dense grid. Fails if the runs do not cover the frame.
pub fn rle_decode(mask: &BinaryMask) -> Result<BoolGrid> {
    let total = mask.height * mask.width;
    let mut data = Vec::with_capacity(total);
    let mut value = false;
    for &r in &mask.runs {
        if data.len() + r as usize > total {
            return Err(Error::MalformedMask(format!(
                "runs overflow {}x{} frame",
                mask.height, mask.width
            )));
        }
        data.extend(std::iter::repeat_n(value, r as usize));
        value = !value;
    }
    if data.len() != total {
        return Err(Error::MalformedMask(format!(
            "run-sum {} != {}",
            data.len(),
            total
        )));
    }
    Grid::from_vec(mask.height, mask.width, data)
}

/// Tightest box around the set pixels.
pub fn mask_bbox(mask: &BinaryMask) -> Result<BBox> {
    let mut bbox: Option<BBox> = None;
    for range in mask.set_ranges() {
        let first = range.start;
        let last = range.end - 1;
        let (r0, r1) = (first / mask.width, last / mask.width);
        // A run spanning several rows covers every column in between.
        let (c0, c1) = if r0 == r1 {
            (first % mask.width, last % mask.width)
        } else {
            (0, mask.width - 1)
        };
        let b = bbox.get_or_insert(BBox::new(r0, c0, r1 + 1, c1 + 1));
        b.row0 = b.row0.min(r0);
        b.col0 = b.col0.min(c0);
        b.row1 = b.row1.max(r1 + 1);
        b.col1 = b.col1.max(c1 + 1);
    }
    bbox.ok_or(Error::EmptyRegion("mask has no set pixels"))
}

/// Which temporal phase an instance mask was segmented from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "phase-a")]
    A,
    #[serde(rename = "phase-b")]
    B,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::A => "a",
            Phase::B => "b",
        }
    }
}

/// Ordered instance masks sharing one frame; a mask's id is its index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    height: usize,
    width: usize,
    masks: Vec<BinaryMask>,
    phases: Vec<Phase>,
}

impl MaskSet {
    pub fn new(height: usize, width: usize) -> Self {
        MaskSet {
            height,
            width,
            masks: Vec::new(),
            phases: Vec::new(),
        }
    }

    pub fn from_masks(
        height: usize,
        width: usize,
        masks: Vec<BinaryMask>,
        phase: Phase,
    ) -> Result<Self> {
        let mut set = MaskSet::new(height, width);
        for m in masks {
            set.push(m, phase)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, mask: BinaryMask, phase: Phase) -> Result<usize> {
        if mask.dims() != (self.height, self.width) {
            return Err(Error::DimensionMismatch(format!(
                "mask {:?} in set of {:?}",
                mask.dims(),
                (self.height, self.width)
            )));
        }
        self.masks.push(mask);
        self.phases.push(phase);
        Ok(self.masks.len() - 1)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&BinaryMask> {
        self.masks.get(id)
    }

    pub fn phase(&self, id: usize) -> Option<Phase> {
        self.phases.get(id).copied()
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    /// `(id, mask, phase)` in id order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &BinaryMask, Phase)> {
        self.masks
            .iter()
            .zip(self.phases.iter().copied())
            .enumerate()
            .map(|(i, (m, p))| (i, m, p))
    }
}
