//! PNG encode/decode for rasters and binary masks.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use super::{rle_encode, BinaryMask, Grid, Image};
use crate::error::{Error, Result};

fn codec(path: &Path, e: image::ImageError) -> Error {
    Error::Codec {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Read any PNG as 8-bit RGB.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| codec(path, e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Image::new(h as usize, w as usize, img.into_raw())
}

pub fn encode_image_png(image: &Image) -> Vec<u8> {
    let buf = RgbImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.data().to_vec(),
    )
    .expect("image buffer length matches dims");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn write_image(image: &Image, path: &Path) -> Result<()> {
    std::fs::write(path, encode_image_png(image)).map_err(|e| Error::io(path, e))
}

/// 8-bit grayscale PNG, 255 for set pixels and 0 elsewhere.
pub fn encode_mask_png(mask: &BinaryMask) -> Vec<u8> {
    let grid = mask.to_grid();
    let pixels = grid.data().iter().map(|&v| if v { 255 } else { 0 }).collect();
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, pixels)
        .expect("mask buffer length matches dims");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn write_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    std::fs::write(path, encode_mask_png(mask)).map_err(|e| Error::io(path, e))
}

/// Read a PNG mask; any nonzero luma counts as set.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| codec(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let grid = Grid::from_vec(
        h as usize,
        w as usize,
        img.into_raw().into_iter().map(|v| v != 0).collect(),
    )?;
    Ok(rle_encode(&grid))
}
