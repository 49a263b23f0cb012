//! Ridge bitmap extraction and thinning.

mod thin;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enhance::RegionMask;
use crate::image::{GrayImage, PgmRaster};

pub use thin::{is_simple, neighbor_mask, thin, Skeleton, NEIGHBOR_OFFSETS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThresholdError {
    #[error("no recoverable pixels to derive a threshold from")]
    EmptyRegion,
}

/// Ridge (1) / background (0) bitmap.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![0; width * height] }
    }

    /// Any non-zero input value becomes a ridge bit.
    pub fn from_bits(width: usize, height: usize, bits: Vec<u8>) -> Self {
        assert_eq!(bits.len(), width * height, "bitmap geometry");
        Self { width, height, bits: bits.into_iter().map(|b| (b != 0) as u8).collect() }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y) as u8);
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x] != 0
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits[y * self.width + x] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }
}

impl PgmRaster for BinaryImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn to_pgm_bytes(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b != 0 { 255 } else { 0 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarizeParams {
    pub threshold: u8,
}

/// `BW(x, y) = 1` iff `I(x, y) >= threshold`.
pub fn binarize(img: &GrayImage, params: BinarizeParams) -> BinaryImage {
    BinaryImage {
        width: img.width(),
        height: img.height(),
        bits: img.data().iter().map(|&v| (v >= params.threshold) as u8).collect(),
    }
}

/// Threshold at the rounded mean intensity of the recoverable pixels.
pub fn auto_threshold(img: &GrayImage, mask: &RegionMask) -> Result<BinarizeParams, ThresholdError> {
    let (mut sum, mut n) = (0u64, 0u64);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.is_pixel_recoverable(x, y) {
                sum += img.get(x, y) as u64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(ThresholdError::EmptyRegion);
    }
    let threshold = ((sum as f64 / n as f64).round()).clamp(0.0, 255.0) as u8;
    Ok(BinarizeParams { threshold })
}
