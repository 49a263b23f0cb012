//! Ridge orientation and frequency estimation, region masking and oriented
//! Gabor filtering.

mod frequency;
mod gabor;
mod mask;
mod orientation;

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

pub use frequency::{estimate_frequency, FrequencyMap, MAX_RIDGE_PERIOD, MIN_RIDGE_PERIOD};
pub use gabor::{gabor_enhance, GaborKernel, GaborParams, KernelCache, BACKGROUND_VALUE};
pub use mask::{compute_region_mask, BlockLabel, MaskOutcome, MaskParams, RegionMask, Rejection};
pub use orientation::{estimate_orientation, sobel_gradients, OrientationField};

#[derive(Debug, Error, PartialEq)]
pub enum EnhanceError {
    #[error("image {width}x{height} is smaller than one {block_size} px block")]
    ImageTooSmall { width: usize, height: usize, block_size: usize },
    #[error("block size {0} is below the minimum of 4")]
    BlockSizeTooSmall(usize),
    #[error("block geometry of the inputs does not match")]
    GeometryMismatch,
    #[error("recoverable block ({col}, {row}) has no ridge frequency")]
    AbsentFrequency { col: usize, row: usize },
}

/// Tiling of a `width x height` raster into square blocks; the last row and
/// column of blocks may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
    pub width: usize,
    pub height: usize,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize, block_size: usize) -> Result<Self, EnhanceError> {
        if block_size < 4 {
            return Err(EnhanceError::BlockSizeTooSmall(block_size));
        }
        if width < block_size || height < block_size {
            return Err(EnhanceError::ImageTooSmall { width, height, block_size });
        }
        Ok(Self { block_size, cols: width.div_ceil(block_size), rows: height.div_ceil(block_size), width, height })
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    #[inline]
    pub fn block_of(&self, x: usize, y: usize) -> (usize, usize) {
        (x / self.block_size, y / self.block_size)
    }

    /// Pixel ranges `(x0..x1, y0..y1)` covered by a block.
    pub fn pixel_bounds(&self, col: usize, row: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let x0 = col * self.block_size;
        let y0 = row * self.block_size;
        (x0..(x0 + self.block_size).min(self.width), y0..(y0 + self.block_size).min(self.height))
    }

    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        let (xs, ys) = self.pixel_bounds(col, row);
        ((xs.start + xs.end - 1) as f64 / 2.0, (ys.start + ys.end - 1) as f64 / 2.0)
    }

    /// True for blocks that are not on the outermost ring.
    pub fn is_interior(&self, col: usize, row: usize) -> bool {
        col > 0 && row > 0 && col + 1 < self.cols && row + 1 < self.rows
    }
}

/// Folds an angle into `[0, π)`.
pub fn fold_half_turn(angle: f64) -> f64 {
    let a = angle.rem_euclid(PI);
    if a >= PI {
        0.0
    } else {
        a
    }
}

/// Smallest difference between two undirected angles, in `[0, π/2]`.
pub fn undirected_angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Renders one value per block as a whitespace-separated text grid.
pub(crate) fn format_block_grid(grid: &BlockGrid, cell: impl Fn(usize) -> String) -> String {
    let mut out = format!("# cols {} rows {} block_size {}\n", grid.cols, grid.rows, grid.block_size);
    for row in 0..grid.rows {
        let line: Vec<String> = (0..grid.cols).map(|col| cell(grid.index(col, row))).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}
