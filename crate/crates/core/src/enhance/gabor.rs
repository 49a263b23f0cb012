use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnhanceError, FrequencyMap, OrientationField, RegionMask};
use crate::image::{GrayImage, NormalizedImage};

/// Value written for pixels outside the recoverable region. Ridges come out
/// dark, so the background is white.
pub const BACKGROUND_VALUE: u8 = 255;

const MID_GRAY: f64 = 128.0;

/// Responses below this are floating-point residue of the zero-mean kernel.
const FLAT_RESPONSE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaborParams {
    /// Gaussian width across the ridges.
    pub sigma_x: f64,
    /// Gaussian width along the ridges.
    pub sigma_y: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        Self { sigma_x: 4.0, sigma_y: 4.0 }
    }
}

impl GaborParams {
    pub fn half_width(&self) -> usize {
        (3.0 * self.sigma_x.max(self.sigma_y)).ceil() as usize
    }
}

/// Even-symmetric, zero-mean Gabor kernel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    pub half_width: usize,
    pub taps: Vec<f64>,
}

impl GaborKernel {
    /// `theta` is the ridge direction; the cosine runs across the ridges.
    pub fn new(theta: f64, freq: f64, params: &GaborParams) -> Self {
        let hw = params.half_width() as isize;
        let (s, c) = theta.sin_cos();
        let mut taps = Vec::with_capacity(((2 * hw + 1) * (2 * hw + 1)) as usize);
        for dy in -hw..=hw {
            for dx in -hw..=hw {
                let (x, y) = (dx as f64, dy as f64);
                let across = -x * s + y * c;
                let along = x * c + y * s;
                let envelope = (-0.5
                    * (across * across / (params.sigma_x * params.sigma_x)
                        + along * along / (params.sigma_y * params.sigma_y)))
                    .exp();
                taps.push(envelope * (2.0 * PI * freq * across).cos());
            }
        }
        let mean = taps.iter().sum::<f64>() / taps.len() as f64;
        taps.iter_mut().for_each(|t| *t -= mean);
        Self { half_width: hw as usize, taps }
    }
}

/// Kernels keyed by orientation quantized to whole degrees and frequency
/// quantized to 1e-4 cycles/px.
#[derive(Debug, Default)]
pub struct KernelCache {
    params: GaborParams,
    kernels: HashMap<(u16, u32), Arc<GaborKernel>>,
}

impl KernelCache {
    pub fn new(params: GaborParams) -> Self {
        Self { params, kernels: HashMap::new() }
    }

    pub fn get(&mut self, theta: f64, freq: f64) -> Arc<GaborKernel> {
        let deg = (theta.to_degrees().round() as i64).rem_euclid(180) as u16;
        let fq = (freq * 1e4).round().max(0.0) as u32;
        let params = self.params;
        self.kernels
            .entry((deg, fq))
            .or_insert_with(|| Arc::new(GaborKernel::new((deg as f64).to_radians(), fq as f64 * 1e-4, &params)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Filters every recoverable pixel with the kernel tuned to its block and
/// rescales so that zero response maps to mid-gray. Unrecoverable pixels are
/// set to [`BACKGROUND_VALUE`].
pub fn gabor_enhance(
    img: &NormalizedImage,
    orient: &OrientationField,
    freq: &FrequencyMap,
    mask: &RegionMask,
    params: &GaborParams,
) -> Result<GrayImage, EnhanceError> {
    let grid = orient.grid;
    if freq.grid != grid || mask.grid != grid || grid.width != img.width() || grid.height != img.height() {
        return Err(EnhanceError::GeometryMismatch);
    }
    let mut cache = KernelCache::new(*params);
    let mut block_kernels: Vec<Option<Arc<GaborKernel>>> = vec![None; grid.len()];
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            if !mask.is_recoverable(col, row) {
                continue;
            }
            let f = freq.at(col, row).ok_or(EnhanceError::AbsentFrequency { col, row })?;
            block_kernels[grid.index(col, row)] = Some(cache.get(orient.at(col, row), f));
        }
    }

    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let mut response = vec![0.0f64; w * h];
    response.par_chunks_mut(w).enumerate().for_each(|(y, out_row)| {
        for (x, out) in out_row.iter_mut().enumerate() {
            let (c, r) = grid.block_of(x, y);
            let Some(k) = &block_kernels[grid.index(c, r)] else { continue };
            let hw = k.half_width as isize;
            let side = 2 * k.half_width + 1;
            let mut acc = 0.0;
            for (j, dy) in (-hw..=hw).enumerate() {
                let sy = reflect(y as isize + dy, h);
                let row_taps = &k.taps[j * side..(j + 1) * side];
                let src_row = &src[sy * w..(sy + 1) * w];
                for (t, dx) in row_taps.iter().zip(-hw..=hw) {
                    acc += t * src_row[reflect(x as isize + dx, w)];
                }
            }
            *out = acc;
        }
    });

    let peak = response.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let data = response
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !mask.is_pixel_recoverable(i % w, i / w) {
                BACKGROUND_VALUE
            } else if peak > FLAT_RESPONSE {
                (MID_GRAY + 127.0 * v / peak).round().clamp(0.0, 255.0) as u8
            } else {
                MID_GRAY as u8
            }
        })
        .collect();
    Ok(GrayImage::new(w, h, data).expect("geometry preserved"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::{BlockGrid, BlockLabel};

    fn uniform_fields(w: usize, h: usize, theta: f64, f: f64) -> (OrientationField, FrequencyMap, RegionMask) {
        let grid = BlockGrid::new(w, h, 16).unwrap();
        (
            OrientationField { grid, theta: vec![theta; grid.len()], coherence: vec![1.0; grid.len()] },
            FrequencyMap { grid, freq: vec![Some(f); grid.len()] },
            RegionMask { grid, labels: vec![BlockLabel::Recoverable; grid.len()], recoverable_fraction: 1.0 },
        )
    }

    #[test]
    fn kernel_is_zero_mean_and_sized() {
        let k = GaborKernel::new(0.3, 0.1, &GaborParams::default());
        assert_eq!(k.half_width, 12);
        assert_eq!(k.taps.len(), 25 * 25);
        assert!(k.taps.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn constant_input_gives_mid_gray() {
        let img = NormalizedImage::from_vec(48, 48, vec![100.0; 48 * 48]);
        let (o, f, m) = uniform_fields(48, 48, 1.0, 0.1);
        let out = gabor_enhance(&img, &o, &f, &m, &GaborParams::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 128));
    }

    #[test]
    fn unrecoverable_pixels_are_background() {
        let img = NormalizedImage::from_vec(48, 48, (0..48 * 48).map(|i| (i % 7) as f64).collect());
        let (o, f, mut m) = uniform_fields(48, 48, 1.0, 0.1);
        m.labels[0] = BlockLabel::Unrecoverable;
        let out = gabor_enhance(&img, &o, &f, &m, &GaborParams::default()).unwrap();
        assert_eq!(out.get(3, 3), BACKGROUND_VALUE);
    }

    #[test]
    fn absent_frequency_in_recoverable_block_is_reported() {
        let img = NormalizedImage::from_vec(48, 48, vec![100.0; 48 * 48]);
        let (o, mut f, m) = uniform_fields(48, 48, 1.0, 0.1);
        f.freq[4] = None;
        assert_eq!(
            gabor_enhance(&img, &o, &f, &m, &GaborParams::default()),
            Err(EnhanceError::AbsentFrequency { col: 1, row: 1 })
        );
    }

    #[test]
    fn cache_quantizes_to_degrees() {
        let mut cache = KernelCache::new(GaborParams::default());
        let a = cache.get(0.2f64.to_radians(), 0.1);
        let b = cache.get(0.9f64.to_radians(), 0.1);
        let c = cache.get(179.6f64.to_radians(), 0.1);
        assert!(!Arc::ptr_eq(&a, &b));
        assert!(Arc::ptr_eq(&c, &cache.get(0.0, 0.1)));
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-2, 10), 2);
        assert_eq!(reflect(10, 10), 8);
        assert_eq!(reflect(4, 10), 4);
    }
}
