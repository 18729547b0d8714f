//! Raster, mask and tensor types shared by every stage, plus the generic
//! morphology, gradient, resampling and labeling routines built on them.

pub(crate) mod components;
mod features;
pub mod io;
mod mask;
pub(crate) mod morph;

pub use components::{connected_components_8, Component, Labeling};
pub use features::{bilinear_upsample, DenseFeatureMap};
pub use mask::{mask_bbox, rle_decode, rle_encode, BinaryMask, MaskSet, Phase};
pub use morph::{box_blur, dilate_3x3, sobel_magnitude};

use crate::error::{Error, Result};

/// An 8-bit, three-channel raster stored row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DimensionMismatch(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "image data length {} != {height}*{width}*3",
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    /// An image filled with one colour.
    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        assert!(height > 0 && width > 0, "image dims must be positive");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(height * width * 3)
            .collect();
        Image {
            height,
            width,
            data,
        }
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copy out the sub-image covered by `bbox`.
    pub fn crop(&self, bbox: BBox) -> Result<Image> {
        bbox.check_within(self.height, self.width)?;
        let mut data = Vec::with_capacity(bbox.height() * bbox.width() * 3);
        for row in bbox.row0..bbox.row1 {
            let start = (row * self.width + bbox.col0) * 3;
            let end = (row * self.width + bbox.col1) * 3;
            data.extend_from_slice(&self.data[start..end]);
        }
        Image::new(bbox.height(), bbox.width(), data)
    }

    pub(crate) fn same_dims(&self, other: &Image, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

/// A dense row-major 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Grid {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "grid data length {} != {height}*{width}",
                data.len()
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Grid {
            height,
            width,
            data,
        }
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }
}

/// Dense binary grid; `true` marks a set pixel.
pub type BoolGrid = Grid<bool>;

/// Dense real-valued grid.
pub type RealGrid = Grid<f64>;

/// Half-open axis-aligned box: rows `row0..row1`, columns `col0..col1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl BBox {
    pub fn new(row0: usize, col0: usize, row1: usize, col1: usize) -> Self {
        BBox {
            row0,
            col0,
            row1,
            col1,
        }
    }

    pub fn height(&self) -> usize {
        self.row1 - self.row0
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0
    }

    pub fn check_within(&self, height: usize, width: usize) -> Result<()> {
        if self.row0 < self.row1 && self.row1 <= height && self.col0 < self.col1 && self.col1 <= width
        {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "box {self:?} not inside {height}x{width}"
            )))
        }
    }
}
