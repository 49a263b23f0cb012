use std::f64::consts::PI;

use super::{fold_half_turn, format_block_grid, BlockGrid, EnhanceError};
use crate::image::NormalizedImage;

/// Per-block ridge direction in `[0, π)`, measured in image coordinates
/// (x right, y down).
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub grid: BlockGrid,
    /// Smoothed ridge direction per block.
    pub theta: Vec<f64>,
    /// Unsmoothed gradient coherence per block, in `[0, 1]`; 0 for flat blocks.
    pub coherence: Vec<f64>,
}

impl OrientationField {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.theta[self.grid.index(col, row)]
    }

    pub fn at_pixel(&self, x: usize, y: usize) -> f64 {
        let (c, r) = self.grid.block_of(x, y);
        self.at(c, r)
    }

    /// Text grid of directions in degrees, one row of blocks per line.
    pub fn to_text_grid(&self) -> String {
        format_block_grid(&self.grid, |i| format!("{:.1}", self.theta[i].to_degrees()))
    }
}

/// 3x3 Sobel derivatives with edge replication.
pub fn sobel_gradients(img: &NormalizedImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| img.get_clamped(x as isize + dx, y as isize + dy);
            gx[y * w + x] = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gy[y * w + x] = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        }
    }
    (gx, gy)
}

/// Least-mean-square block orientation from the gradient covariance.
///
/// Per block, `θ = ½·atan2(Σ2GxGy, Σ(Gx²−Gy²)) + π/2`. The doubled-angle
/// vectors, scaled by coherence, are Gaussian-smoothed over `smooth_sigma`
/// blocks before the final angle is taken.
pub fn estimate_orientation(
    img: &NormalizedImage,
    block_size: usize,
    smooth_sigma: f64,
) -> Result<OrientationField, EnhanceError> {
    let grid = BlockGrid::new(img.width(), img.height(), block_size)?;
    let (gx, gy) = sobel_gradients(img);
    let w = img.width();

    let mut vx = vec![0.0; grid.len()];
    let mut vy = vec![0.0; grid.len()];
    let mut coherence = vec![0.0; grid.len()];
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (xs, ys) = grid.pixel_bounds(col, row);
            let (mut sxy, mut sdiff, mut senergy) = (0.0, 0.0, 0.0);
            for y in ys {
                for x in xs.clone() {
                    let (a, b) = (gx[y * w + x], gy[y * w + x]);
                    sxy += 2.0 * a * b;
                    sdiff += a * a - b * b;
                    senergy += a * a + b * b;
                }
            }
            let i = grid.index(col, row);
            if senergy > 0.0 {
                // unit doubled-angle vector weighted by coherence
                vx[i] = sdiff / senergy;
                vy[i] = sxy / senergy;
                coherence[i] = (sxy.hypot(sdiff) / senergy).min(1.0);
            }
        }
    }

    let (vx, vy) = if smooth_sigma > 0.0 {
        (smooth_blocks(&grid, &vx, smooth_sigma), smooth_blocks(&grid, &vy, smooth_sigma))
    } else {
        (vx, vy)
    };
    let theta = vx.iter().zip(&vy).map(|(&c, &s)| fold_half_turn(0.5 * s.atan2(c) + PI / 2.0)).collect();
    Ok(OrientationField { grid, theta, coherence })
}

/// Separable Gaussian over the block grid, renormalized at the edges.
pub(crate) fn smooth_blocks(grid: &BlockGrid, values: &[f64], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for row in 0..grid.rows {
            for col in 0..grid.cols {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (t, k) in taps.iter().zip(-radius..=radius) {
                    let (c, r) =
                        if horizontal { (col as isize + k, row as isize) } else { (col as isize, row as isize + k) };
                    if c < 0 || r < 0 || c >= grid.cols as isize || r >= grid.rows as isize {
                        continue;
                    }
                    acc += t * src[grid.index(c as usize, r as usize)];
                    norm += t;
                }
                out[grid.index(col, row)] = acc / norm;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}
