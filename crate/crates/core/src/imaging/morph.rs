use super::{rle_decode, rle_encode, BinaryMask, BoolGrid, Grid, RealGrid};
use crate::error::{Error, Result};

/// Binary dilation with a 3x3 square, repeated `iterations` times.
///
/// Neighbourhoods are clipped at the frame border.
pub fn dilate_3x3(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    if iterations == 0 || mask.is_empty() {
        return mask.clone();
    }
    let grid = rle_decode(mask).expect("validated mask decodes");
    rle_encode(&dilate_grid(&grid, iterations))
}

pub(crate) fn dilate_grid(grid: &BoolGrid, iterations: usize) -> BoolGrid {
    let (h, w) = grid.dims();
    let mut cur = grid.clone();
    for _ in 0..iterations {
        let prev = cur.clone();
        for row in 0..h {
            let r0 = row.saturating_sub(1);
            let r1 = (row + 1).min(h - 1);
            for col in 0..w {
                if prev.at(row, col) {
                    continue;
                }
                let c0 = col.saturating_sub(1);
                let c1 = (col + 1).min(w - 1);
                let hit = (r0..=r1).any(|r| (c0..=c1).any(|c| prev.at(r, c)));
                if hit {
                    cur.set(row, col, true);
                }
            }
        }
    }
    cur
}

#[inline]
fn clamped(grid: &RealGrid, row: isize, col: isize) -> f64 {
    let r = row.clamp(0, grid.height() as isize - 1) as usize;
    let c = col.clamp(0, grid.width() as isize - 1) as usize;
    grid.at(r, c)
}

/// Gradient magnitude `sqrt(gx^2 + gy^2)` from the standard 3x3 Sobel
/// kernels, with replicate padding at the border.
pub fn sobel_magnitude(map: &RealGrid) -> Result<RealGrid> {
    let (h, w) = map.dims();
    if h < 3 || w < 3 {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            min: 3,
        });
    }
    Ok(Grid::from_fn(h, w, |row, col| {
        let (r, c) = (row as isize, col as isize);
        let p = |dr: isize, dc: isize| clamped(map, r + dr, c + dc);
        let gx = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        let gy = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
        (gx * gx + gy * gy).sqrt()
    }))
}

/// Mean over a `(2r+1)x(2r+1)` window with replicate padding. Sums run in
/// row-major window order so the result is reproducible bit for bit.
pub fn box_blur(map: &RealGrid, radius: usize) -> RealGrid {
    if radius == 0 {
        return map.clone();
    }
    let r = radius as isize;
    let n = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    Grid::from_fn(map.height(), map.width(), |row, col| {
        let mut sum = 0.0;
        for dr in -r..=r {
            for dc in -r..=r {
                sum += clamped(map, row as isize + dr, col as isize + dc);
            }
        }
        sum / n
    })
}
