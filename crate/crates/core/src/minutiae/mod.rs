//! Minutiae detection on the skeleton by 9-pixel neighbourhood counts,
//! post-processing filters and the minutiae text format.

mod file;
mod postprocess;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binthin::{Skeleton, NEIGHBOR_OFFSETS};

pub use file::{format_minutiae, parse_minutiae, read_minutiae, write_minutiae, MinutiaeFileError};
pub use postprocess::{postprocess, PostprocessParams};

/// Steps walked along a branch to estimate its direction.
pub const DIRECTION_WALK: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MinutiaeError {
    #[error("pixel ({x}, {y}) is outside the {width}x{height} skeleton")]
    OutOfBounds { x: usize, y: usize, width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MinutiaKind {
    #[serde(rename = "E")]
    Ending,
    #[serde(rename = "B")]
    Bifurcation,
}

impl MinutiaKind {
    pub fn code(self) -> char {
        match self {
            MinutiaKind::Ending => 'E',
            MinutiaKind::Bifurcation => 'B',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "E" => Some(MinutiaKind::Ending),
            "B" => Some(MinutiaKind::Bifurcation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minutia {
    pub x: usize,
    pub y: usize,
    pub kind: MinutiaKind,
    /// Ridge tangent leaving the point, radians in `[0, 2π)`.
    pub direction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Raw,
    Postprocessed,
    /// Read from a file (detector output or ground truth).
    Loaded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinutiaeSet {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub minutiae: Vec<Minutia>,
    pub provenance: Provenance,
}

impl MinutiaeSet {
    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }

    pub fn count_kind(&self, kind: MinutiaKind) -> usize {
        self.minutiae.iter().filter(|m| m.kind == kind).count()
    }
}

/// Ridge pixels in the 3x3 window centred on `(x, y)`, centre included.
pub fn neighborhood_count(skel: &Skeleton, x: usize, y: usize) -> Result<u32, MinutiaeError> {
    if x >= skel.width() || y >= skel.height() {
        return Err(MinutiaeError::OutOfBounds { x, y, width: skel.width(), height: skel.height() });
    }
    Ok(count_at(skel, x, y))
}

#[inline]
fn count_at(skel: &Skeleton, x: usize, y: usize) -> u32 {
    skel.get(x, y) as u32 + skel.neighbors(x, y).count_ones()
}

/// Neighbourhood count, centre included: 2 is a ridge ending, 3 a plain ridge pixel, 4 or more a
/// bifurcation. Only meaningful for ridge pixels.
pub fn classify_count(count: u32) -> Option<MinutiaKind> {
    match count {
        2 => Some(MinutiaKind::Ending),
        c if c >= 4 => Some(MinutiaKind::Bifurcation),
        _ => None,
    }
}

/// Classification of a single skeleton pixel by its neighbourhood count.
pub fn classify_pixel(skel: &Skeleton, x: usize, y: usize) -> Option<MinutiaKind> {
    if !skel.get(x, y) {
        return None;
    }
    classify_count(count_at(skel, x, y))
}

fn ridge_neighbors(skel: &Skeleton, x: usize, y: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    NEIGHBOR_OFFSETS.iter().enumerate().filter_map(move |(i, (dx, dy))| {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        skel.get_or_zero(nx, ny).then_some((i, nx as usize, ny as usize))
    })
}

/// Groups the ridge neighbours of `(x, y)` into mutually 8-adjacent branches;
/// returns one starting pixel per branch, orthogonal neighbours preferred.
fn branch_starts(skel: &Skeleton, x: usize, y: usize) -> Vec<(usize, usize)> {
    let nbrs: Vec<(usize, usize, usize)> = ridge_neighbors(skel, x, y).collect();
    let mut group = vec![usize::MAX; nbrs.len()];
    let mut groups = 0;
    for s in 0..nbrs.len() {
        if group[s] != usize::MAX {
            continue;
        }
        group[s] = groups;
        let mut stack = vec![s];
        while let Some(a) = stack.pop() {
            for b in 0..nbrs.len() {
                let adjacent = nbrs[a].1.abs_diff(nbrs[b].1) <= 1 && nbrs[a].2.abs_diff(nbrs[b].2) <= 1;
                if group[b] == usize::MAX && adjacent {
                    group[b] = groups;
                    stack.push(b);
                }
            }
        }
        groups += 1;
    }
    (0..groups)
        .map(|g| {
            let members = nbrs.iter().zip(&group).filter(|(_, &k)| k == g).map(|(n, _)| n);
            let best = members.min_by_key(|(i, _, _)| (i % 2, *i)).expect("non-empty group");
            (best.1, best.2)
        })
        .collect()
}

/// Walks up to `steps` pixels from `start` away from `origin` and returns the
/// angle from `origin` to the last pixel reached.
fn walk_direction(skel: &Skeleton, origin: (usize, usize), start: (usize, usize), steps: usize) -> f64 {
    let mut visited = vec![origin, start];
    let mut cur = start;
    for _ in 1..steps {
        let next = ridge_neighbors(skel, cur.0, cur.1)
            .filter(|&(_, nx, ny)| !visited.contains(&(nx, ny)))
            .min_by_key(|(i, _, _)| (i % 2, *i));
        match next {
            Some((_, nx, ny)) => {
                cur = (nx, ny);
                visited.push(cur);
            }
            None => break,
        }
    }
    let dy = cur.1 as f64 - origin.1 as f64;
    let dx = cur.0 as f64 - origin.0 as f64;
    dy.atan2(dx).rem_euclid(TAU)
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Direction of a minutia: the single branch for an ending, the branch that
/// lies between the other two (the stem) for a bifurcation.
pub fn minutia_direction(skel: &Skeleton, x: usize, y: usize, kind: MinutiaKind) -> f64 {
    let dirs: Vec<f64> =
        branch_starts(skel, x, y).into_iter().map(|s| walk_direction(skel, (x, y), s, DIRECTION_WALK)).collect();
    match (kind, dirs.len()) {
        (_, 0) => 0.0,
        (MinutiaKind::Ending, _) | (_, 1) | (_, 2) => dirs[0],
        (MinutiaKind::Bifurcation, _) => {
            let isolation = |i: usize| {
                dirs.iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &d)| angular_distance(dirs[i], d))
                    .fold(PI, f64::min)
            };
            let best = (0..dirs.len())
                .max_by(|&a, &b| isolation(a).partial_cmp(&isolation(b)).unwrap().then(b.cmp(&a)))
                .expect("non-empty");
            dirs[best]
        }
    }
}

/// Pixels of the 8-connected cluster of count >= 4 pixels containing `seed`.
pub(crate) fn junction_cluster(skel: &Skeleton, seed: (usize, usize)) -> Vec<(usize, usize)> {
    let mut cluster = vec![seed];
    let mut i = 0;
    while i < cluster.len() {
        let (x, y) = cluster[i];
        for (_, nx, ny) in ridge_neighbors(skel, x, y) {
            if !cluster.contains(&(nx, ny)) && count_at(skel, nx, ny) >= 4 {
                cluster.push((nx, ny));
            }
        }
        i += 1;
    }
    cluster
}

/// Scans every ridge pixel and records endings (count 2) and bifurcations
/// (count >= 4). Adjacent bifurcation pixels are collapsed to the one with the
/// highest count, ties going to the first in row-major order.
pub fn extract_minutiae(skel: &Skeleton, image_id: &str) -> MinutiaeSet {
    let (w, h) = (skel.width(), skel.height());
    let mut claimed = vec![false; w * h];
    let mut minutiae = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !skel.get(x, y) || claimed[y * w + x] {
                continue;
            }
            match classify_count(count_at(skel, x, y)) {
                Some(MinutiaKind::Ending) => minutiae.push(Minutia {
                    x,
                    y,
                    kind: MinutiaKind::Ending,
                    direction: minutia_direction(skel, x, y, MinutiaKind::Ending),
                }),
                Some(MinutiaKind::Bifurcation) => {
                    let mut cluster = junction_cluster(skel, (x, y));
                    cluster.sort_by_key(|&(cx, cy)| (cy, cx));
                    let mut best = cluster[0];
                    for &p in &cluster {
                        claimed[p.1 * w + p.0] = true;
                        if count_at(skel, p.0, p.1) > count_at(skel, best.0, best.1) {
                            best = p;
                        }
                    }
                    minutiae.push(Minutia {
                        x: best.0,
                        y: best.1,
                        kind: MinutiaKind::Bifurcation,
                        direction: minutia_direction(skel, best.0, best.1, MinutiaKind::Bifurcation),
                    });
                }
                None => {}
            }
        }
    }
    minutiae.sort_by_key(|m| (m.y, m.x));
    MinutiaeSet { image_id: image_id.to_string(), width: w, height: h, minutiae, provenance: Provenance::Raw }
}
