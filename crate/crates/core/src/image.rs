//! Grayscale image container, PGM I/O and intensity normalization.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Resolution the default parameters are tuned for.
pub const DEFAULT_DPI: u32 = 500;

/// Smallest image side the enhancement stages accept (two 16 px blocks).
pub const MIN_PIPELINE_SIDE: usize = 32;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a PGM file (magic {0:?})")]
    BadMagic(String),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0} (only 1..=255)")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed pixel data: {0}")]
    MalformedPixels(String),
    #[error("invalid image geometry {width}x{height} for {len} samples")]
    Geometry { width: usize, height: usize, len: usize },
}

/// Row-major 8-bit grayscale raster, origin top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
    dpi: u32,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PgmError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(PgmError::Geometry { width, height, len: data.len() });
        }
        Ok(Self { width, height, data, dpi: DEFAULT_DPI })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height], dpi: DEFAULT_DPI }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data, dpi: DEFAULT_DPI }
    }

    pub fn with_dpi(mut self, dpi: u32) -> Self {
        self.dpi = dpi;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dpi(&self) -> u32 {
        self.dpi
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn inverted(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 255 - v).collect(),
            dpi: self.dpi,
        }
    }
}

/// Anything that can be written out as an 8-bit PGM raster.
pub trait PgmRaster {
    fn dimensions(&self) -> (usize, usize);
    fn to_pgm_bytes(&self) -> Vec<u8>;
}

impl PgmRaster for GrayImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn to_pgm_bytes(&self) -> Vec<u8> {
        self.data.clone()
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        let tok = self.token().ok_or_else(|| PgmError::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| PgmError::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

/// Decodes a P2 (ASCII) or P5 (binary) PGM held in memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut rd = HeaderReader { bytes, pos: 0 };
    let magic = rd.token().ok_or_else(|| PgmError::BadMagic(String::new()))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => return Err(PgmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let width = rd.number("width")? as usize;
    let height = rd.number("height")? as usize;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    let expected = width * height;
    let mut data = Vec::with_capacity(expected);
    if binary {
        // exactly one whitespace byte separates maxval from the raster
        let start = rd.pos + 1;
        let raster = bytes.get(start..).unwrap_or(&[]);
        if raster.len() < expected {
            return Err(PgmError::Truncated { expected, found: raster.len() });
        }
        data.extend_from_slice(&raster[..expected]);
    } else {
        while data.len() < expected {
            let Some(tok) = rd.token() else {
                return Err(PgmError::Truncated { expected, found: data.len() });
            };
            let v = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| PgmError::MalformedPixels(String::from_utf8_lossy(tok).into_owned()))?;
            if v > maxval {
                return Err(PgmError::MalformedPixels(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as u8);
        }
    }
    if maxval != 255 {
        for v in &mut data {
            *v = ((*v as u32 * 255 + maxval / 2) / maxval) as u8;
        }
    }
    GrayImage::new(width, height, data)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, PgmError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => PgmError::NotFound(path.to_path_buf()),
        _ => PgmError::Io(e),
    })?;
    decode_pgm(&bytes)
}

pub fn encode_pgm(img: &impl PgmRaster) -> Vec<u8> {
    let (w, h) = img.dimensions();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&img.to_pgm_bytes());
    out
}

/// Writes a binary P5 PGM with maxval 255.
pub fn save_pgm(img: &impl PgmRaster, path: impl AsRef<Path>) -> Result<(), PgmError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    file.write_all(&encode_pgm(img))?;
    file.flush()?;
    Ok(())
}

/// Real-valued image produced by [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl NormalizedImage {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "normalized image geometry");
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped to the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample; outside the raster the nearest edge value is used.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn mean_and_variance(&self) -> (f64, f64) {
        mean_and_variance(self.data.iter().copied())
    }
}

/// Population mean and variance.
pub(crate) fn mean_and_variance(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var)
}

/// Maps the image to the requested mean and variance.
///
/// Each pixel becomes `target_mean ± sqrt(target_variance * (I - mean)^2 / variance)`
/// with the sign of `I - mean`. A constant image maps to `target_mean` everywhere.
pub fn normalize(img: &GrayImage, target_mean: f64, target_variance: f64) -> NormalizedImage {
    let samples: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();
    NormalizedImage {
        width: img.width,
        height: img.height,
        data: normalize_samples(&samples, target_mean, target_variance),
    }
}

impl NormalizedImage {
    /// Applies the same mean/variance mapping as [`normalize`] to real-valued samples.
    pub fn renormalized(&self, target_mean: f64, target_variance: f64) -> NormalizedImage {
        NormalizedImage {
            width: self.width,
            height: self.height,
            data: normalize_samples(&self.data, target_mean, target_variance),
        }
    }
}

fn normalize_samples(samples: &[f64], target_mean: f64, target_variance: f64) -> Vec<f64> {
    assert!(target_variance > 0.0, "target variance must be positive");
    let (mean, var) = mean_and_variance(samples.iter().copied());
    if var <= 0.0 {
        return vec![target_mean; samples.len()];
    }
    samples
        .iter()
        .map(|&v| {
            let d = v - mean;
            let dev = (target_variance * d * d / var).sqrt();
            if d > 0.0 {
                target_mean + dev
            } else {
                target_mean - dev
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_three_by_three() {
        let img = decode_pgm(b"P2\n# comment\n3 3\n255\n0 1 2\n3 4 5\n6 7 8\n").unwrap();
        assert_eq!((img.width(), img.height()), (3, 3));
        assert_eq!(img.data(), &[0, 1, 2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn p5_with_comment_in_header() {
        let mut bytes = b"P5\n# made by hand\n2 2\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[0, 255, 128, 64]);
    }

    #[test]
    fn sixteen_bit_maxval_is_rejected() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(decode_pgm(&bytes), Err(PgmError::UnsupportedMaxval(65535))));
    }

    #[test]
    fn errors_are_distinct() {
        assert!(matches!(decode_pgm(b"P6 1 1 255\n\0"), Err(PgmError::BadMagic(_))));
        assert!(matches!(decode_pgm(b"P5 2 x 255\n"), Err(PgmError::MalformedHeader(_))));
        assert!(matches!(decode_pgm(b"P5 2 2 255\n\x01\x02"), Err(PgmError::Truncated { expected: 4, found: 2 })));
        assert!(matches!(decode_pgm(b"P2 2 2 255\n1 2 3"), Err(PgmError::Truncated { expected: 4, found: 3 })));
        assert!(matches!(load_pgm("/nonexistent/definitely/missing.pgm"), Err(PgmError::NotFound(_))));
    }

    #[test]
    fn low_maxval_is_rescaled() {
        let img = decode_pgm(b"P2 2 1 15\n0 15\n").unwrap();
        assert_eq!(img.data(), &[0, 255]);
    }

    #[test]
    fn save_then_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = GrayImage::new(2, 2, vec![0, 255, 128, 64]).unwrap();
        save_pgm(&img, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap().data(), img.data());
        assert_eq!(fs::read(&path).unwrap(), encode_pgm(&img));
    }

    #[test]
    fn normalize_constant_image() {
        let img = GrayImage::filled(8, 8, 77);
        let n = normalize(&img, 100.0, 100.0);
        assert!(n.data().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn normalize_two_level_image() {
        // mean 100, variance 10000 -> deviation sqrt(100 * 10000 / 10000) = 10
        let img = GrayImage::new(2, 1, vec![0, 200]).unwrap();
        let n = normalize(&img, 100.0, 100.0);
        assert_eq!(n.data(), &[90.0, 110.0]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * 37 + y * 11) % 251) as u8);
        let once = normalize(&img, 100.0, 100.0);
        let twice = once.renormalized(100.0, 100.0);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
