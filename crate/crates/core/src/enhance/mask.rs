use serde::{Deserialize, Serialize};

use super::{BlockGrid, EnhanceError, FrequencyMap, OrientationField};
use crate::image::{mean_and_variance, GrayImage, NormalizedImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLabel {
    Recoverable,
    Unrecoverable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskParams {
    /// Minimum block intensity variance on the normalized scale.
    pub variance_floor: f64,
    /// Minimum gradient coherence.
    pub coherence_floor: f64,
    /// Images with a smaller recoverable fraction are rejected.
    pub reject_threshold: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self { variance_floor: 10.0, coherence_floor: 0.3, reject_threshold: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub grid: BlockGrid,
    pub labels: Vec<BlockLabel>,
    pub recoverable_fraction: f64,
}

impl RegionMask {
    pub fn is_recoverable(&self, col: usize, row: usize) -> bool {
        self.labels[self.grid.index(col, row)] == BlockLabel::Recoverable
    }

    pub fn is_pixel_recoverable(&self, x: usize, y: usize) -> bool {
        let (c, r) = self.grid.block_of(x, y);
        self.is_recoverable(c, r)
    }

    /// Pixel-resolution rendering: 255 for recoverable, 0 otherwise.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(
            self.grid.width,
            self.grid.height,
            |x, y| {
                if self.is_pixel_recoverable(x, y) {
                    255
                } else {
                    0
                }
            },
        )
    }
}

/// The image failed the recoverable-area check; carries the computed mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub recoverable_fraction: f64,
    pub threshold: f64,
    pub mask: RegionMask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskOutcome {
    Accepted(RegionMask),
    Rejected(Rejection),
}

impl MaskOutcome {
    pub fn mask(&self) -> &RegionMask {
        match self {
            MaskOutcome::Accepted(m) => m,
            MaskOutcome::Rejected(r) => &r.mask,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, MaskOutcome::Accepted(_))
    }
}

/// Labels a block recoverable when its variance and coherence clear their
/// floors and it has a ridge frequency.
pub fn compute_region_mask(
    img: &NormalizedImage,
    orient: &OrientationField,
    freq: &FrequencyMap,
    params: &MaskParams,
) -> Result<MaskOutcome, EnhanceError> {
    let grid = orient.grid;
    if freq.grid != grid || grid.width != img.width() || grid.height != img.height() {
        return Err(EnhanceError::GeometryMismatch);
    }
    let mut labels = Vec::with_capacity(grid.len());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (xs, ys) = grid.pixel_bounds(col, row);
            let pixels = ys.flat_map(|y| xs.clone().map(move |x| (x, y)));
            let (_, var) = mean_and_variance(pixels.map(|(x, y)| img.get(x, y)));
            let i = grid.index(col, row);
            let ok =
                var >= params.variance_floor && orient.coherence[i] >= params.coherence_floor && freq.freq[i].is_some();
            labels.push(if ok { BlockLabel::Recoverable } else { BlockLabel::Unrecoverable });
        }
    }
    let recoverable = labels.iter().filter(|&&l| l == BlockLabel::Recoverable).count();
    let mask = RegionMask { grid, recoverable_fraction: recoverable as f64 / grid.len() as f64, labels };
    Ok(if mask.recoverable_fraction < params.reject_threshold {
        MaskOutcome::Rejected(Rejection {
            recoverable_fraction: mask.recoverable_fraction,
            threshold: params.reject_threshold,
            mask,
        })
    } else {
        MaskOutcome::Accepted(mask)
    })
}
