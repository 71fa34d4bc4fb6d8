//! Seeded synthetic image pairs with known ground-truth transforms.
//!
//! `moving = warp(remap(fixed), truth) + noise`, so the transform that
//! realigns the pair is the inverse of `truth`. Both are written to the JSON
//! sidecar.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{remap_intensity, save_pgm, Image2D, Remap};
use crate::transform::{warp, AffineParams, CenterPixel, CenteredParams};

pub const MIN_FIXTURE_SIZE: usize = 64;

/// Intensity range the base patterns are rendered into.
pub const PATTERN_MAX: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    PhantomEllipses,
    Checker,
    NoiseSmoothed,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phantom" | "phantom_ellipses" | "phantom-ellipses" => Ok(Pattern::PhantomEllipses),
            "checker" => Ok(Pattern::Checker),
            "noise" | "noise_smoothed" | "noise-smoothed" => Ok(Pattern::NoiseSmoothed),
            other => Err(Error::Parameter(format!("unknown pattern {other:?}"))),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::PhantomEllipses => "phantom",
            Pattern::Checker => "checker",
            Pattern::NoiseSmoothed => "noise",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub base_pattern: Pattern,
    pub size: usize,
    /// Warp applied to the remapped fixed image to produce the moving image.
    pub truth: AffineParams,
    pub remap: Remap,
    /// Noise standard deviation as a fraction of the intensity range.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn new(base_pattern: Pattern, size: usize) -> Self {
        Self {
            base_pattern,
            size,
            truth: AffineParams::IDENTITY,
            remap: Remap::Identity,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < MIN_FIXTURE_SIZE {
            return Err(Error::Parameter(format!(
                "fixture size must be >= {MIN_FIXTURE_SIZE}, got {}",
                self.size
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Parameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        self.truth.validate()
    }
}

#[derive(Debug, Clone)]
pub struct FixturePair {
    pub fixed: Image2D,
    pub moving: Image2D,
    pub truth: AffineParams,
    /// Parameters that map `moving` back onto `fixed`.
    pub inverse: AffineParams,
    pub center: CenterPixel,
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    /// Transform applied to produce the moving image.
    pub truth: CenteredParams,
    /// Transform a registration should recover.
    pub inverse: CenteredParams,
    pub spec: FixtureSpec,
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle_deg: f64,
    value: f64,
}

const fn ellipse(cx: f64, cy: f64, a: f64, b: f64, angle_deg: f64, value: f64) -> Ellipse {
    Ellipse {
        cx,
        cy,
        a,
        b,
        angle_deg,
        value,
    }
}

// Painted in order, later ellipses overwrite earlier ones. Coordinates are in
// [-1, 1] with y pointing down. Deliberately asymmetric.
const PHANTOM: [Ellipse; 11] = [
    ellipse(0.0, 0.0, 0.72, 0.90, 0.0, 200.0),
    ellipse(0.0, -0.02, 0.64, 0.82, 0.0, 90.0),
    ellipse(0.22, -0.05, 0.11, 0.30, -18.0, 30.0),
    ellipse(-0.22, -0.02, 0.15, 0.38, 18.0, 45.0),
    ellipse(0.0, 0.42, 0.22, 0.16, 0.0, 150.0),
    ellipse(0.02, -0.52, 0.10, 0.10, 0.0, 240.0),
    ellipse(-0.35, 0.50, 0.12, 0.07, 30.0, 120.0),
    ellipse(0.38, 0.45, 0.10, 0.16, -25.0, 170.0),
    ellipse(0.30, -0.55, 0.12, 0.08, 40.0, 60.0),
    ellipse(-0.38, -0.55, 0.09, 0.14, 0.0, 130.0),
    ellipse(-0.05, 0.10, 0.06, 0.06, 0.0, 215.0),
];

fn render_phantom(size: usize) -> Image2D {
    let half = (size as f64 - 1.0) / 2.0;
    Image2D::from_fn(size, size, |x, y| {
        let (nx, ny) = ((x as f64 - half) / half, (y as f64 - half) / half);
        PHANTOM.iter().fold(0.0, |v, e| {
            let (s, c) = e.angle_deg.to_radians().sin_cos();
            let (dx, dy) = (nx - e.cx, ny - e.cy);
            let (u, w) = (c * dx + s * dy, -s * dx + c * dy);
            if (u / e.a).powi(2) + (w / e.b).powi(2) <= 1.0 {
                e.value
            } else {
                v
            }
        })
    })
}

fn render_checker(size: usize) -> Image2D {
    let cell = (size / 8).max(2);
    Image2D::from_fn(size, size, |x, y| {
        if (x / cell + y / cell).is_multiple_of(2) {
            60.0
        } else {
            190.0
        }
    })
}

fn smooth_pass(data: &[f64], size: usize) -> Vec<f64> {
    const W: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let idx = |i: isize| -> usize {
        let n = size as isize;
        let r = if i < 0 {
            -i
        } else if i >= n {
            2 * (n - 1) - i
        } else {
            i
        };
        r as usize
    };
    let mut tmp = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = (-2..=2isize)
                .map(|m| W[(m + 2) as usize] * data[y * size + idx(x as isize + m)])
                .sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = (-2..=2isize)
                .map(|n| W[(n + 2) as usize] * tmp[idx(y as isize + n) * size + x])
                .sum();
        }
    }
    out
}

fn render_noise(size: usize, rng: &mut ChaCha8Rng) -> Image2D {
    let mut data: Vec<f64> = (0..size * size)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    for _ in 0..8 {
        data = smooth_pass(&data, size);
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image2D::from_raw(
        size,
        size,
        data.into_iter()
            .map(|v| PATTERN_MAX * (v - lo) / span)
            .collect(),
    )
}

/// Renders the base pattern of `spec` (the fixed image).
pub fn render_pattern(spec: &FixtureSpec) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.base_pattern {
        Pattern::PhantomEllipses => render_phantom(spec.size),
        Pattern::Checker => render_checker(spec.size),
        Pattern::NoiseSmoothed => render_noise(spec.size, &mut rng),
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

fn border_median(image: &Image2D) -> f64 {
    let (w, h) = image.dims();
    let mut border = Vec::with_capacity(2 * (w + h));
    for x in 0..w {
        border.push(image.get(x, 0));
        border.push(image.get(x, h - 1));
    }
    for y in 0..h {
        border.push(image.get(0, y));
        border.push(image.get(w - 1, y));
    }
    median(border)
}

pub fn generate_pair(spec: &FixtureSpec) -> Result<FixturePair> {
    spec.validate()?;
    let fixed = render_pattern(spec);
    let remapped = remap_intensity(&fixed, spec.remap)?;
    let center = CenterPixel::of(&fixed);

    // Area brought into view from outside the remapped image takes its
    // median border intensity.
    let (warped, mask) = warp(&remapped, &spec.truth, center, border_median(&remapped))?;
    if 2 * mask.count() < mask.width() * mask.height() {
        return Err(Error::FixtureUnusable(format!(
            "truth {:?} leaves only {} of {} pixels in view",
            spec.truth,
            mask.count(),
            mask.width() * mask.height()
        )));
    }

    let (lo, hi) = remapped.min_max();
    let moving = if spec.noise_sigma > 0.0 {
        let sigma = spec.noise_sigma * (hi - lo);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6a09_e667_f3bc_c908);
        warped.map(|v| {
            let n: f64 = rng.sample(StandardNormal);
            (v + sigma * n).clamp(lo, hi)
        })?
    } else {
        warped
    };

    Ok(FixturePair {
        fixed,
        moving,
        truth: spec.truth,
        inverse: spec.truth.inverse(center)?,
        center,
    })
}

impl FixturePair {
    pub fn sidecar(&self, spec: &FixtureSpec) -> TruthSidecar {
        TruthSidecar {
            truth: CenteredParams::new(self.truth, self.center),
            inverse: CenteredParams::new(self.inverse, self.center),
            spec: *spec,
        }
    }
}

/// Writes `fixed.pgm`, `moving.pgm` and `truth.json` into `dir`.
pub fn write_fixture(dir: impl AsRef<Path>, spec: &FixtureSpec) -> Result<FixturePair> {
    let dir = dir.as_ref();
    let pair = generate_pair(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_pgm(&pair.fixed, dir.join("fixed.pgm"), 255)?;
    save_pgm(&pair.moving, dir.join("moving.pgm"), 255)?;
    let json = serde_json::to_string_pretty(&pair.sidecar(spec))
        .map_err(|e| Error::Serialize(e.to_string()))?;
    let path = dir.join("truth.json");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(pair)
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<TruthSidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialize(format!("{}: {e}", path.display())))
}
