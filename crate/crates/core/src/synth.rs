//! Seeded synthetic ridge patterns with known minutiae.
//!
//! Ridges are the dark level lines of `cos φ`. Each injected minutia is a
//! unit phase vortex, which adds one ridge on one side of the point. Whether
//! the new ridge starts as an ending or splits off as a bifurcation depends on
//! the phase at the vortex, so a smooth local phase bump sets it per point.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{GrayImage, MIN_PIPELINE_SIDE};
use crate::minutiae::{Minutia, MinutiaKind, MinutiaeSet, Provenance};

pub const MIN_PERIOD: f64 = 4.0;
pub const MAX_PERIOD: f64 = 20.0;

const MEAN_LEVEL: f64 = 128.0;
const RIDGE_AMPLITUDE: f64 = 90.0;
const PLACEMENT_ATTEMPTS: usize = 20_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("period {0} outside [4, 20]")]
    PeriodOutOfRange(f64),
    #[error("image {0}x{1} is smaller than 32x32")]
    TooSmall(usize, usize),
    #[error("minutia at ({x}, {y}) is closer than {min:.1} px to the border")]
    TooCloseToBorder { x: usize, y: usize, min: f64 },
    #[error("minutiae at ({0}, {1}) and ({2}, {3}) are closer than {4:.1} px")]
    TooClose(usize, usize, usize, usize, f64),
    #[error("could not place {requested} random minutiae (placed {placed})")]
    Placement { requested: usize, placed: usize },
    #[error("negative noise amplitude {0}")]
    NegativeNoise(f64),
    #[error("cannot read spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid spec file: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Pattern {
    /// Straight ridges; `angle_deg` is the direction across the ridges in
    /// image coordinates (x right, y down).
    Parallel { angle_deg: f64 },
    /// Circular ridges around a centre, which may lie outside the image.
    Concentric { center_x: f64, center_y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectedMinutia {
    pub x: usize,
    pub y: usize,
    pub kind: MinutiaKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pattern: Pattern,
    pub period: f64,
    #[serde(default)]
    pub injected: Vec<InjectedMinutia>,
    /// Extra minutiae placed at seeded random positions.
    #[serde(default)]
    pub random_minutiae: usize,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "synth".to_string()
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn image_id(&self) -> String {
        format!("{}_{:04}", self.name, self.seed)
    }

    fn check_point(&self, x: usize, y: usize) -> Result<(), SynthError> {
        let margin = 2.0 * self.period;
        let edge = (x.min(y) as f64).min((self.width - 1 - x) as f64).min((self.height - 1 - y) as f64);
        if x >= self.width || y >= self.height || edge < margin {
            return Err(SynthError::TooCloseToBorder { x, y, min: margin });
        }
        Ok(())
    }

    /// All minutiae of the image: explicit ones first, then seeded random ones.
    pub fn resolve_minutiae(&self) -> Result<Vec<InjectedMinutia>, SynthError> {
        if !(MIN_PERIOD..=MAX_PERIOD).contains(&self.period) {
            return Err(SynthError::PeriodOutOfRange(self.period));
        }
        if self.width < MIN_PIPELINE_SIDE || self.height < MIN_PIPELINE_SIDE {
            return Err(SynthError::TooSmall(self.width, self.height));
        }
        if self.noise_amplitude.is_nan() || self.noise_amplitude < 0.0 {
            return Err(SynthError::NegativeNoise(self.noise_amplitude));
        }
        let spacing = 3.0 * self.period;
        let mut points = self.injected.clone();
        for (i, a) in points.iter().enumerate() {
            self.check_point(a.x, a.y)?;
            for b in &points[..i] {
                if distance(a.x, a.y, b.x, b.y) < spacing {
                    return Err(SynthError::TooClose(b.x, b.y, a.x, a.y, spacing));
                }
            }
        }
        if self.random_minutiae > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(1);
            let margin = (2.0 * self.period).ceil() as usize;
            if self.width <= 2 * margin || self.height <= 2 * margin {
                return Err(SynthError::Placement { requested: self.random_minutiae, placed: 0 });
            }
            let mut placed = 0;
            for _ in 0..PLACEMENT_ATTEMPTS {
                if placed == self.random_minutiae {
                    break;
                }
                let x = rng.gen_range(margin..self.width - margin);
                let y = rng.gen_range(margin..self.height - margin);
                let kind = if rng.gen_bool(0.5) { MinutiaKind::Ending } else { MinutiaKind::Bifurcation };
                if self.check_point(x, y).is_ok() && points.iter().all(|p| distance(p.x, p.y, x, y) >= spacing) {
                    points.push(InjectedMinutia { x, y, kind });
                    placed += 1;
                }
            }
            if placed < self.random_minutiae {
                return Err(SynthError::Placement { requested: self.random_minutiae, placed });
            }
        }
        Ok(points)
    }
}

fn distance(ax: usize, ay: usize, bx: usize, by: usize) -> f64 {
    (ax as f64 - bx as f64).hypot(ay as f64 - by as f64)
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

struct Vortex {
    x: f64,
    y: f64,
    spin: f64,
    /// Phase correction applied through the bump around the vortex.
    shift: f64,
}

struct PhaseField {
    pattern: Pattern,
    period: f64,
    vortices: Vec<Vortex>,
    bump_radius: f64,
}

impl PhaseField {
    fn carrier(&self, x: f64, y: f64) -> f64 {
        match self.pattern {
            Pattern::Parallel { angle_deg } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                TAU * (x * c + y * s) / self.period
            }
            Pattern::Concentric { center_x, center_y } => TAU * (x - center_x).hypot(y - center_y) / self.period,
        }
    }

    /// Direction of increasing carrier phase (across the ridges).
    fn carrier_normal(&self, x: f64, y: f64) -> f64 {
        match self.pattern {
            Pattern::Parallel { angle_deg } => angle_deg.to_radians(),
            Pattern::Concentric { center_x, center_y } => (y - center_y).atan2(x - center_x),
        }
    }

    fn bump(&self, dx: f64, dy: f64) -> f64 {
        let r2 = (dx * dx + dy * dy) / (self.bump_radius * self.bump_radius);
        if r2 >= 1.0 {
            0.0
        } else {
            (1.0 - r2) * (1.0 - r2)
        }
    }

    /// Phase at a point, leaving out the spiral term of vortex `skip`.
    fn phase_excluding(&self, x: f64, y: f64, skip: Option<usize>) -> f64 {
        let mut phase = self.carrier(x, y);
        for (i, v) in self.vortices.iter().enumerate() {
            let (dx, dy) = (x - v.x, y - v.y);
            if Some(i) != skip {
                phase += v.spin * dy.atan2(dx);
            }
            phase += v.shift * self.bump(dx, dy);
        }
        phase
    }

    fn phase(&self, x: f64, y: f64) -> f64 {
        self.phase_excluding(x, y, None)
    }
}

/// Renders the pattern and returns it with the exact ground truth.
pub fn generate(spec: &SynthSpec) -> Result<(GrayImage, MinutiaeSet), SynthError> {
    let points = spec.resolve_minutiae()?;
    let mut field = PhaseField {
        pattern: spec.pattern,
        period: spec.period,
        vortices: Vec::with_capacity(points.len()),
        bump_radius: 1.5 * spec.period,
    };
    let mut truth = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let spin = if i % 2 == 0 { 1.0 } else { -1.0 };
        let (x, y) = (p.x as f64, p.y as f64);
        // the extra ridge opens on this side of the vortex
        let open_side = field.carrier_normal(x, y) - spin * PI / 2.0;
        // a dark ray (phase 0) into the open side is a ridge ending, a light
        // one (phase π) leaves a valley there, i.e. a bifurcation
        let target = match p.kind {
            MinutiaKind::Ending => 0.0,
            MinutiaKind::Bifurcation => PI,
        };
        let base = field.phase_excluding(x, y, Some(i));
        let shift = wrap_pi(target - base - spin * open_side);
        field.vortices.push(Vortex { x, y, spin, shift });
        let direction = match p.kind {
            MinutiaKind::Ending => open_side,
            MinutiaKind::Bifurcation => open_side + PI,
        };
        truth.push(Minutia { x: p.x, y: p.y, kind: p.kind, direction: direction.rem_euclid(TAU) });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);
    let amp = spec.noise_amplitude;
    let img = GrayImage::from_fn(spec.width, spec.height, |x, y| {
        let clean = MEAN_LEVEL - RIDGE_AMPLITUDE * field.phase(x as f64, y as f64).cos();
        let noise = if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 };
        (clean + noise).round().clamp(0.0, 255.0) as u8
    });
    let set = MinutiaeSet {
        image_id: spec.image_id(),
        width: spec.width,
        height: spec.height,
        minutiae: truth,
        provenance: Provenance::Loaded,
    };
    Ok((img, set))
}
