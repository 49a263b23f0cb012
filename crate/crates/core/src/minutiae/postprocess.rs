use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{count_at, junction_cluster, ridge_neighbors, Minutia, MinutiaKind, MinutiaeSet, Provenance};
use crate::binthin::{is_simple, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostprocessParams {
    /// Minutiae with another minutia within this Chebyshev distance are dropped.
    pub adjacency_window: usize,
    /// Minutiae closer than this to an image edge are dropped.
    pub border_distance: usize,
    /// Largest Euclidean gap bridged between two facing endings.
    pub reconnect_gap: f64,
    /// Ending-to-bifurcation ridge paths up to this many steps are spurs.
    pub spur_length: usize,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        Self { adjacency_window: 6, border_distance: 10, reconnect_gap: 6.0, spur_length: 6 }
    }
}

/// Angle tolerance around π for two endings to count as facing each other.
const ANTIPARALLEL_SLACK: f64 = PI / 6.0;

enum SpurWalk {
    Spur { path: Vec<(usize, usize)>, junction: (usize, usize) },
    NotSpur,
}

/// Follows the ridge from an ending until it reaches a junction pixel, a dead
/// end, or exceeds `max_steps`.
fn walk_to_junction(skel: &Skeleton, start: (usize, usize), max_steps: usize) -> SpurWalk {
    let mut path = vec![start];
    let mut cur = start;
    for _ in 0..max_steps {
        let next = ridge_neighbors(skel, cur.0, cur.1)
            .filter(|&(_, nx, ny)| !path.contains(&(nx, ny)))
            .min_by_key(|&(i, nx, ny)| (count_at(skel, nx, ny) < 4, i % 2, i));
        let Some((_, nx, ny)) = next else {
            return SpurWalk::NotSpur;
        };
        if count_at(skel, nx, ny) >= 4 {
            return SpurWalk::Spur { path, junction: (nx, ny) };
        }
        path.push((nx, ny));
        cur = (nx, ny);
    }
    SpurWalk::NotSpur
}

fn remove_spurs(minutiae: &mut Vec<Minutia>, skel: &mut Skeleton, spur_length: usize) {
    let endings: Vec<(usize, usize)> =
        minutiae.iter().filter(|m| m.kind == MinutiaKind::Ending).map(|m| (m.x, m.y)).collect();
    for e in endings {
        let still_ending = minutiae.iter().any(|m| m.kind == MinutiaKind::Ending && (m.x, m.y) == e);
        if !still_ending || !skel.get(e.0, e.1) || count_at(skel, e.0, e.1) != 2 {
            continue;
        }
        let SpurWalk::Spur { path, junction } = walk_to_junction(skel, e, spur_length) else {
            continue;
        };
        let cluster = junction_cluster(skel, junction);
        minutiae.retain(|m| {
            let p = (m.x, m.y);
            let in_junction = m.kind == MinutiaKind::Bifurcation
                && (cluster.contains(&p) || (m.x.abs_diff(junction.0) <= 1 && m.y.abs_diff(junction.1) <= 1));
            p != e && !in_junction
        });
        for (x, y) in path {
            skel.set(x, y, false);
        }
        // junction pixels that only carried the spur are now simple
        // non-endpoints; peel them so no stub is left behind
        let mut stub = cluster;
        stub.push(junction);
        for (x, y) in stub {
            let m = skel.neighbors(x, y);
            if skel.get(x, y) && m.count_ones() >= 2 && is_simple(m) {
                skel.set(x, y, false);
            }
        }
    }
}

/// Pixels strictly between `a` and `b` on the Bresenham line.
fn line_between(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (mut x, mut y) = (a.0 as isize, a.1 as isize);
    let (x1, y1) = (b.0 as isize, b.1 as isize);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        if (x, y) == (x1, y1) {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        if (x, y) != (x1, y1) {
            out.push((x as usize, y as usize));
        }
    }
    out
}

fn reconnect(minutiae: &mut Vec<Minutia>, skel: &mut Skeleton, gap: f64) {
    let endings: Vec<Minutia> = minutiae.iter().filter(|m| m.kind == MinutiaKind::Ending).copied().collect();
    let mut candidates = Vec::new();
    for i in 0..endings.len() {
        for j in i + 1..endings.len() {
            let (a, b) = (endings[i], endings[j]);
            let dist = (a.x as f64 - b.x as f64).hypot(a.y as f64 - b.y as f64);
            if dist > gap {
                continue;
            }
            let turn = (a.direction - b.direction).rem_euclid(TAU);
            let between = turn.min(TAU - turn);
            if between < PI - ANTIPARALLEL_SLACK {
                continue;
            }
            let segment = line_between((a.x, a.y), (b.x, b.y));
            if segment.iter().any(|&(x, y)| skel.get(x, y)) {
                continue;
            }
            candidates.push((dist, i, j, segment));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = vec![false; endings.len()];
    for (_, i, j, segment) in candidates {
        if used[i] || used[j] {
            continue;
        }
        // an earlier bridge may now cross this one
        if segment.iter().any(|&(x, y)| skel.get(x, y)) {
            continue;
        }
        used[i] = true;
        used[j] = true;
        for (x, y) in segment {
            skel.set(x, y, true);
        }
    }
    let joined: Vec<(usize, usize)> = endings.iter().zip(&used).filter(|(_, &u)| u).map(|(m, _)| (m.x, m.y)).collect();
    minutiae.retain(|m| !(m.kind == MinutiaKind::Ending && joined.contains(&(m.x, m.y))));
}

/// Removes spurious and redundant minutiae. Rules run in this order:
///
/// 1. spurs: an ending whose ridge reaches a bifurcation within
///    `spur_length` steps is deleted together with that bifurcation, and the
///    spur is erased from the skeleton;
/// 2. border: minutiae closer than `border_distance` to an image edge;
/// 3. reconnection: pairs of endings at most `reconnect_gap` apart, pointing
///    roughly at each other with clear background between them, are removed
///    and the gap is drawn into the skeleton;
/// 4. adjacency: every minutia with another one within `adjacency_window`
///    (Chebyshev) is dropped, both members of each close pair.
pub fn postprocess(set: &MinutiaeSet, skel: &Skeleton, params: &PostprocessParams) -> (MinutiaeSet, Skeleton) {
    let mut skel = skel.clone();
    let mut minutiae = set.minutiae.clone();
    let (w, h) = (skel.width(), skel.height());

    remove_spurs(&mut minutiae, &mut skel, params.spur_length);

    let d = params.border_distance;
    minutiae.retain(|m| m.x.min(m.y).min(w - 1 - m.x).min(h - 1 - m.y) >= d);

    reconnect(&mut minutiae, &mut skel, params.reconnect_gap);

    let win = params.adjacency_window;
    let crowded: Vec<bool> = minutiae
        .iter()
        .enumerate()
        .map(|(i, a)| {
            minutiae.iter().enumerate().any(|(j, b)| i != j && a.x.abs_diff(b.x) <= win && a.y.abs_diff(b.y) <= win)
        })
        .collect();
    let minutiae = minutiae.into_iter().zip(crowded).filter(|(_, c)| !c).map(|(m, _)| m).collect();

    (
        MinutiaeSet {
            image_id: set.image_id.clone(),
            width: set.width,
            height: set.height,
            minutiae,
            provenance: Provenance::Postprocessed,
        },
        skel,
    )
}
