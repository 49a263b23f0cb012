//! Plain-text minutiae lists, shared by detector output and ground truth:
//!
//! ```text
//! # image_id width height
//! x y kind direction_deg
//! ```
//!
//! `kind` is `E` or `B`; the direction is written in degrees with one decimal.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Minutia, MinutiaKind, MinutiaeSet, Provenance};

#[derive(Debug, Error)]
pub enum MinutiaeFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> MinutiaeFileError {
    MinutiaeFileError::Parse { line, message: message.into() }
}

pub fn format_minutiae(set: &MinutiaeSet) -> String {
    let mut out = format!("# {} {} {}\n", set.image_id, set.width, set.height);
    for m in &set.minutiae {
        let _ = writeln!(out, "{} {} {} {:.1}", m.x, m.y, m.kind.code(), m.direction.to_degrees());
    }
    out
}

pub fn parse_minutiae(text: &str) -> Result<MinutiaeSet, MinutiaeFileError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<&str> = header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "header must start with '#'"))?
        .split_whitespace()
        .collect();
    let [image_id, width, height] = fields[..] else {
        return Err(parse_err(1, "header must be '# image_id width height'"));
    };
    let dim = |s: &str| s.parse::<usize>().map_err(|_| parse_err(1, format!("bad dimension {s:?}")));
    let (width, height) = (dim(width)?, dim(height)?);

    let mut minutiae: Vec<Minutia> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        let [x, y, kind, dir] = f[..] else {
            return Err(parse_err(line_no, "expected 'x y kind direction_deg'"));
        };
        let coord = |s: &str| s.parse::<usize>().map_err(|_| parse_err(line_no, format!("bad coordinate {s:?}")));
        let (x, y) = (coord(x)?, coord(y)?);
        if x >= width || y >= height {
            return Err(parse_err(line_no, format!("({x}, {y}) outside {width}x{height}")));
        }
        let kind = MinutiaKind::from_code(kind).ok_or_else(|| parse_err(line_no, format!("bad kind {kind:?}")))?;
        let deg: f64 = dir.parse().map_err(|_| parse_err(line_no, format!("bad direction {dir:?}")))?;
        if minutiae.iter().any(|m| (m.x, m.y) == (x, y)) {
            return Err(parse_err(line_no, format!("duplicate minutia at ({x}, {y})")));
        }
        minutiae.push(Minutia { x, y, kind, direction: deg.to_radians().rem_euclid(std::f64::consts::TAU) });
    }
    Ok(MinutiaeSet { image_id: image_id.to_string(), width, height, minutiae, provenance: Provenance::Loaded })
}

pub fn write_minutiae(set: &MinutiaeSet, path: impl AsRef<Path>) -> Result<(), MinutiaeFileError> {
    fs::write(path, format_minutiae(set))?;
    Ok(())
}

pub fn read_minutiae(path: impl AsRef<Path>) -> Result<MinutiaeSet, MinutiaeFileError> {
    parse_minutiae(&fs::read_to_string(path)?)
}
