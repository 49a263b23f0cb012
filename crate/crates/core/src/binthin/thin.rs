use super::BinaryImage;
use crate::image::PgmRaster;

/// Neighbour offsets in clockwise ring order starting north:
/// N, NE, E, SE, S, SW, W, NW. Bit `i` of a neighbour mask refers to entry `i`.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] =
    [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

const N: u8 = 1 << 0;
const E: u8 = 1 << 2;
const S: u8 = 1 << 4;
const W: u8 = 1 << 6;

const fn components(mask: u8, eight: bool, only_touching_center: bool) -> u32 {
    // ring positions are visited as a graph; adjacency is Chebyshev (8) or
    // Manhattan (4) distance 1 between offsets
    let mut seen: u8 = 0;
    let mut count = 0;
    let mut start = 0;
    while start < 8 {
        if mask & (1 << start) != 0 && seen & (1 << start) == 0 {
            let mut stack = [0usize; 8];
            let mut top = 1;
            stack[0] = start;
            seen |= 1 << start;
            let mut touches = false;
            while top > 0 {
                top -= 1;
                let i = stack[top];
                if i % 2 == 0 {
                    touches = true;
                }
                let mut j = 0;
                while j < 8 {
                    if mask & (1 << j) != 0 && seen & (1 << j) == 0 {
                        let dx = NEIGHBOR_OFFSETS[i].0 - NEIGHBOR_OFFSETS[j].0;
                        let dy = NEIGHBOR_OFFSETS[i].1 - NEIGHBOR_OFFSETS[j].1;
                        let (adx, ady) = (if dx < 0 { -dx } else { dx }, if dy < 0 { -dy } else { dy });
                        let adjacent = if eight { adx <= 1 && ady <= 1 } else { adx + ady == 1 };
                        if adjacent {
                            seen |= 1 << j;
                            stack[top] = j;
                            top += 1;
                        }
                    }
                    j += 1;
                }
            }
            if !only_touching_center || touches {
                count += 1;
            }
        }
        start += 1;
    }
    count
}

const fn simple_table() -> [bool; 256] {
    let mut table = [false; 256];
    let mut m = 0;
    while m < 256 {
        let fg = m as u8;
        table[m] = components(fg, true, false) == 1 && components(!fg, false, true) == 1;
        m += 1;
    }
    table
}

static SIMPLE: [bool; 256] = simple_table();

/// Whether removing the centre pixel leaves the topology unchanged
/// (8-connected foreground, 4-connected background).
#[inline]
pub fn is_simple(neighbors: u8) -> bool {
    SIMPLE[neighbors as usize]
}

/// Ring mask of ridge neighbours; outside the image counts as background.
#[inline]
pub fn neighbor_mask(img: &BinaryImage, x: usize, y: usize) -> u8 {
    let mut m = 0u8;
    for (i, (dx, dy)) in NEIGHBOR_OFFSETS.iter().enumerate() {
        if img.get_or_zero(x as isize + dx, y as isize + dy) {
            m |= 1 << i;
        }
    }
    m
}

/// One-pixel-wide ridge map.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Skeleton {
    bits: BinaryImage,
}

impl Skeleton {
    /// Wraps a bitmap that is already thin without checking it.
    pub fn from_binary_unchecked(bits: BinaryImage) -> Self {
        Self { bits }
    }

    pub fn as_binary(&self) -> &BinaryImage {
        &self.bits
    }

    pub fn into_binary(self) -> BinaryImage {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.bits.width()
    }

    pub fn height(&self) -> usize {
        self.bits.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits.get(x, y)
    }

    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> bool {
        self.bits.get_or_zero(x, y)
    }

    pub(crate) fn set(&mut self, x: usize, y: usize, on: bool) {
        self.bits.set(x, y, on)
    }

    pub fn neighbors(&self, x: usize, y: usize) -> u8 {
        neighbor_mask(&self.bits, x, y)
    }

    /// True if any 2x2 window is entirely ridge.
    pub fn has_square_block(&self) -> bool {
        let (w, h) = (self.width(), self.height());
        (0..h.saturating_sub(1)).any(|y| {
            (0..w.saturating_sub(1))
                .any(|x| self.get(x, y) && self.get(x + 1, y) && self.get(x, y + 1) && self.get(x + 1, y + 1))
        })
    }
}

impl PgmRaster for Skeleton {
    fn dimensions(&self) -> (usize, usize) {
        self.bits.dimensions()
    }

    fn to_pgm_bytes(&self) -> Vec<u8> {
        self.bits.to_pgm_bytes()
    }
}

fn marked_in_subiteration(m: u8, first: bool) -> bool {
    let count = m.count_ones();
    if !(2..=6).contains(&count) || !is_simple(m) {
        return false;
    }
    let has = |bit: u8| m & bit != 0;
    if first {
        !(has(N) && has(E) && has(S)) && !(has(E) && has(S) && has(W))
    } else {
        !(has(N) && has(E) && has(W)) && !(has(N) && has(S) && has(W))
    }
}

/// Deletes marked pixels in raster order, re-checking each against the
/// partially updated image so no two deletions can jointly break topology.
fn delete_marked(img: &mut BinaryImage, marked: &[(usize, usize)]) -> bool {
    let mut changed = false;
    for &(x, y) in marked {
        let m = neighbor_mask(img, x, y);
        if m.count_ones() >= 2 && is_simple(m) {
            img.set(x, y, false);
            changed = true;
        }
    }
    changed
}

fn square_corner_candidates(img: &BinaryImage) -> Vec<(usize, usize)> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !img.get(x, y) {
                continue;
            }
            let in_square = [(-1isize, -1isize), (0, -1), (-1, 0), (0, 0)].iter().any(|&(ox, oy)| {
                let (bx, by) = (x as isize + ox, y as isize + oy);
                img.get_or_zero(bx, by)
                    && img.get_or_zero(bx + 1, by)
                    && img.get_or_zero(bx, by + 1)
                    && img.get_or_zero(bx + 1, by + 1)
            });
            if in_square {
                out.push((x, y));
            }
        }
    }
    out
}

/// Two-subiteration boundary peeling run to a fixpoint.
///
/// Candidates are marked in parallel per subiteration (south-east boundary
/// first, then north-west), then removed only while they are still simple
/// and not curve endpoints. Any 2x2 ridge square left at convergence is
/// reduced the same way.
pub fn thin(bin: &BinaryImage) -> Skeleton {
    let mut img = bin.clone();
    let (w, h) = (img.width(), img.height());
    loop {
        let mut changed = false;
        for first in [true, false] {
            let mut marked = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if img.get(x, y) && marked_in_subiteration(neighbor_mask(&img, x, y), first) {
                        marked.push((x, y));
                    }
                }
            }
            changed |= delete_marked(&mut img, &marked);
        }
        if !changed {
            let squares = square_corner_candidates(&img);
            if !delete_marked(&mut img, &squares) {
                break;
            }
        }
    }
    Skeleton { bits: img }
}
