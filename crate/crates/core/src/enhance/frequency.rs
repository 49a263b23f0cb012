use super::{format_block_grid, BlockGrid, EnhanceError, OrientationField};
use crate::image::NormalizedImage;

/// Shortest accepted ridge period in pixels.
pub const MIN_RIDGE_PERIOD: f64 = 3.0;
/// Longest accepted ridge period in pixels.
pub const MAX_RIDGE_PERIOD: f64 = 25.0;

const FILL_PASSES: usize = 3;

/// Per-block ridge frequency in cycles per pixel; `None` where no valid
/// periodicity was found.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMap {
    pub grid: BlockGrid,
    pub freq: Vec<Option<f64>>,
}

impl FrequencyMap {
    pub fn at(&self, col: usize, row: usize) -> Option<f64> {
        self.freq[self.grid.index(col, row)]
    }

    pub fn to_text_grid(&self) -> String {
        format_block_grid(&self.grid, |i| match self.freq[i] {
            Some(f) => format!("{f:.4}"),
            None => "-".to_string(),
        })
    }
}

/// Samples the oriented window around a block center and averages along the
/// ridge direction, giving one value per step across the ridges.
fn x_signature(img: &NormalizedImage, cx: f64, cy: f64, theta: f64, length: usize, width: usize) -> Vec<f64> {
    let (along_y, along_x) = theta.sin_cos();
    let (across_x, across_y) = (-along_y, along_x);
    let half_len = (length as f64 - 1.0) / 2.0;
    let half_w = (width as f64 - 1.0) / 2.0;
    (0..length)
        .map(|k| {
            let u = k as f64 - half_len;
            let sum: f64 = (0..width)
                .map(|d| {
                    let v = d as f64 - half_w;
                    img.sample_bilinear(cx + u * across_x + v * along_x, cy + u * across_y + v * along_y)
                })
                .sum();
            sum / width as f64
        })
        .collect()
}

/// Mean spacing between signature maxima, refined to sub-sample precision.
fn period_from_signature(sig: &[f64]) -> Option<f64> {
    let mean = sig.iter().sum::<f64>() / sig.len() as f64;
    let mut peaks = Vec::new();
    for k in 1..sig.len().saturating_sub(1) {
        let (l, c, r) = (sig[k - 1], sig[k], sig[k + 1]);
        if c > mean && c >= l && c > r {
            let denom = l - 2.0 * c + r;
            let offset = if denom < 0.0 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            peaks.push(k as f64 + offset);
        }
    }
    if peaks.len() < 2 {
        return None;
    }
    Some((peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64)
}

/// Ridge frequency from oriented x-signatures of `window` samples across the
/// ridge, each averaged over one block along the ridge. Periods outside
/// `[3, 25]` px are dropped, then gaps are filled from the mean of present
/// 3x3 neighbours for up to three passes.
pub fn estimate_frequency(
    img: &NormalizedImage,
    orient: &OrientationField,
    window: usize,
) -> Result<FrequencyMap, EnhanceError> {
    let grid = orient.grid;
    if grid.width != img.width() || grid.height != img.height() {
        return Err(EnhanceError::GeometryMismatch);
    }
    let mut freq = vec![None; grid.len()];
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (cx, cy) = grid.center(col, row);
            let sig = x_signature(img, cx, cy, orient.at(col, row), window.max(3), grid.block_size);
            freq[grid.index(col, row)] = period_from_signature(&sig)
                .filter(|p| (MIN_RIDGE_PERIOD..=MAX_RIDGE_PERIOD).contains(p))
                .map(|p| 1.0 / p);
        }
    }

    for _ in 0..FILL_PASSES {
        if freq.iter().all(Option::is_some) {
            break;
        }
        let prev = freq.clone();
        for row in 0..grid.rows {
            for col in 0..grid.cols {
                let i = grid.index(col, row);
                if prev[i].is_some() {
                    continue;
                }
                let (mut sum, mut n) = (0.0, 0usize);
                for r in row.saturating_sub(1)..=(row + 1).min(grid.rows - 1) {
                    for c in col.saturating_sub(1)..=(col + 1).min(grid.cols - 1) {
                        if let Some(f) = prev[grid.index(c, r)] {
                            sum += f;
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    freq[i] = Some(sum / n as f64);
                }
            }
        }
    }
    Ok(FrequencyMap { grid, freq })
}
