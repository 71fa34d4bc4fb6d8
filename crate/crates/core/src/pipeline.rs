//! The three registration strategies and their shared evaluation.
//!
//! Every strategy is a coarse-to-fine sequence of stages. A stage holds one or
//! more fixed/moving channel pairs sampled on a grid related to the full
//! resolution grid by `u_full = u_stage / scale + offset`. Each stage's
//! center pixel is the image of the full-resolution center under that map, so
//! rotation, scale and shear carry over unchanged between stages and only the
//! translation is rescaled.
//!
//! - `Pyramid`: one channel (the image) on each Gaussian pyramid level.
//! - `Wavelet`: the Haar sub-bands at half resolution, a single stage.
//! - `DwtPyramid`: a Gaussian pyramid built on each sub-band.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image2D, Mask2D};
use crate::metric::{correlation_coefficient, mutual_information_bits, MetricConfig, Metrics};
use crate::optimizer::{optimize, OptimizerConfig, OptimizerTrace};
use crate::pyramid::build_pyramid;
use crate::transform::{scale_params_between_levels, warp, AffineParams, CenterPixel};
use crate::wavelet::{dwt2, idwt2, Band, SubBands};

/// Smallest accepted input side.
pub const MIN_IMAGE_SIZE: usize = 32;

/// Candidates overlapping fewer than this fraction of a stage's pixels are
/// treated as out of domain.
pub const MIN_OVERLAP_FRACTION: f64 = 0.25;

/// Per-stage step scales for `(tx, ty, theta, sx, sy, k)`. With the default
/// initial radius of 0.001 the first mutation has a standard deviation of
/// half a stage pixel in translation, about 0.57 degrees in rotation and
/// 0.005 in scale and shear.
pub const DEFAULT_STAGE_SCALES: [f64; 6] = [500.0, 500.0, 10.0, 5.0, 5.0, 5.0];

/// Parameter mask that frees only translation and rotation.
pub const RIGID_MASK: [bool; 6] = [true, true, true, false, false, false];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pyramid,
    Wavelet,
    DwtPyramid,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Pyramid, Method::Wavelet, Method::DwtPyramid];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pyramid => "pyramid",
            Method::Wavelet => "wavelet",
            Method::DwtPyramid => "dwt-pyramid",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pyramid" => Ok(Method::Pyramid),
            "wavelet" => Ok(Method::Wavelet),
            "dwt-pyramid" | "dwt_pyramid" => Ok(Method::DwtPyramid),
            other => Err(Error::Parameter(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubbandObjective {
    LlOnly,
    SumAllBands,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub method: Method,
    pub pyramid_levels: usize,
    pub metric: MetricConfig,
    /// Template for every stage; its seed is replaced by
    /// `master_seed + level` and its free mask by `parameter_mask`.
    pub optimizer: OptimizerConfig,
    pub parameter_mask: [bool; 6],
    pub subband_objective: SubbandObjective,
    /// Cap each stage's histogram bins with [`stage_bins`].
    pub adaptive_bins: bool,
    pub master_seed: u64,
    /// Starting parameters in full-resolution coordinates.
    pub initial: AffineParams,
}

impl RegistrationConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            pyramid_levels: 3,
            metric: MetricConfig::default(),
            optimizer: OptimizerConfig {
                param_scales: DEFAULT_STAGE_SCALES,
                ..OptimizerConfig::default()
            },
            parameter_mask: [true; 6],
            subband_objective: SubbandObjective::SumAllBands,
            adaptive_bins: true,
            master_seed: 0,
            initial: AffineParams::IDENTITY,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::Parameter("pyramid_levels must be at least 1".into()));
        }
        self.metric.validate()?;
        self.optimizer.validate()?;
        self.initial.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelTrace {
    /// Pyramid level (0 = finest) within the method's hierarchy.
    pub level: usize,
    /// Stage grid spacing relative to full resolution (1, 1/2, 1/4, ...).
    pub scale: f64,
    /// Parameters the stage started from, in stage coordinates.
    pub start: AffineParams,
    pub trace: OptimizerTrace,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub method: Method,
    /// Full-resolution parameters about `center`.
    pub params: AffineParams,
    pub center: CenterPixel,
    pub registered: Image2D,
    pub mask: Mask2D,
    /// Largest objective value attained over all stages, each in its own
    /// objective space.
    pub max_mi_bits: f64,
    /// Spatial-domain MI between the fixed and registered images.
    pub final_mi_bits: f64,
    pub cc: f64,
    /// Coarse to fine.
    pub traces: Vec<LevelTrace>,
}

impl RegistrationResult {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            mi_bits: self.final_mi_bits,
            cc: self.cc,
            overlap_pixels: self.mask.count(),
        }
    }
}

struct Stage {
    level: usize,
    scale: f64,
    center: CenterPixel,
    fixed: Vec<Image2D>,
    moving: Vec<Image2D>,
}

impl Stage {
    fn metric(&self, metric: &MetricConfig, adaptive_bins: bool) -> MetricConfig {
        if !adaptive_bins {
            return *metric;
        }
        let (w, h) = self.fixed[0].dims();
        MetricConfig {
            histogram_bins: stage_bins(metric.histogram_bins, w * h),
            ..*metric
        }
    }

    fn objective(&self, params: &AffineParams, config: &RegistrationConfig) -> Result<f64> {
        let (w, h) = self.fixed[0].dims();
        let min_overlap = ((w * h) as f64 * MIN_OVERLAP_FRACTION).ceil() as usize;
        let metric = &self.metric(&config.metric, config.adaptive_bins);
        let values: Vec<Result<f64>> = self
            .fixed
            .par_iter()
            .zip(self.moving.par_iter())
            .map(|(f, m)| {
                let (warped, mask) = warp(m, params, self.center, 0.0)?;
                if mask.count() < min_overlap.max(1) {
                    return Err(Error::NoOverlap);
                }
                mutual_information_bits(f, &warped, &mask, metric)
            })
            .collect();
        // Fixed band order keeps the sum deterministic.
        values.into_iter().sum()
    }
}

/// Histogram bins for a stage of `pixels` samples: the configured count,
/// capped at half the square root of the sample count so that small coarse
/// stages are not dominated by the upward bias of sparse joint histograms.
pub fn stage_bins(configured: usize, pixels: usize) -> usize {
    let cap = ((pixels as f64).sqrt() / 2.0).floor() as usize;
    configured.min(cap.max(2))
}

/// Maps the full-resolution center onto a grid with spacing `1/scale`
/// offset by `offset` full-resolution pixels.
fn stage_center(full: CenterPixel, scale: f64, offset: f64) -> CenterPixel {
    CenterPixel::new((full.x - offset) * scale, (full.y - offset) * scale)
}

/// Haar sub-band pixel `i` covers full-resolution pixels `2i` and `2i + 1`.
const SUBBAND_OFFSET: f64 = 0.5;

fn subband_channels(bands: &SubBands, objective: SubbandObjective) -> Vec<&Image2D> {
    match objective {
        SubbandObjective::LlOnly => vec![bands.band(Band::LL)],
        SubbandObjective::SumAllBands => Band::ALL.iter().map(|&b| bands.band(b)).collect(),
    }
}

fn build_stages(
    fixed: &Image2D,
    moving: &Image2D,
    config: &RegistrationConfig,
) -> Result<Vec<Stage>> {
    let full_center = CenterPixel::of(fixed);
    let mut stages = Vec::new();
    match config.method {
        Method::Pyramid => {
            let fp = build_pyramid(fixed, config.pyramid_levels)?;
            let mp = build_pyramid(moving, config.pyramid_levels)?;
            for (level, (f, m)) in fp.levels.into_iter().zip(mp.levels).enumerate() {
                let scale = 0.5f64.powi(level as i32);
                stages.push(Stage {
                    level,
                    scale,
                    center: stage_center(full_center, scale, 0.0),
                    fixed: vec![f],
                    moving: vec![m],
                });
            }
        }
        Method::Wavelet => {
            let (fb, mb) = (dwt2(fixed)?, dwt2(moving)?);
            stages.push(Stage {
                level: 0,
                scale: 0.5,
                center: stage_center(full_center, 0.5, SUBBAND_OFFSET),
                fixed: subband_channels(&fb, config.subband_objective)
                    .into_iter()
                    .cloned()
                    .collect(),
                moving: subband_channels(&mb, config.subband_objective)
                    .into_iter()
                    .cloned()
                    .collect(),
            });
        }
        Method::DwtPyramid => {
            let (fb, mb) = (dwt2(fixed)?, dwt2(moving)?);
            let pyramids = |bands: &SubBands| -> Result<Vec<Vec<Image2D>>> {
                subband_channels(bands, config.subband_objective)
                    .into_iter()
                    .map(|b| Ok(build_pyramid(b, config.pyramid_levels)?.levels))
                    .collect()
            };
            let (fpyr, mpyr) = (pyramids(&fb)?, pyramids(&mb)?);
            let levels = fpyr[0].len();
            for level in 0..levels {
                let scale = 0.5f64.powi(level as i32 + 1);
                stages.push(Stage {
                    level,
                    scale,
                    center: stage_center(full_center, scale, SUBBAND_OFFSET),
                    fixed: fpyr.iter().map(|p| p[level].clone()).collect(),
                    moving: mpyr.iter().map(|p| p[level].clone()).collect(),
                });
            }
        }
    }
    stages.reverse();
    Ok(stages)
}

fn check_inputs(fixed: &Image2D, moving: &Image2D) -> Result<()> {
    if !fixed.same_dims(moving) {
        return Err(Error::Dimension(format!(
            "fixed {:?} and moving {:?} must match",
            fixed.dims(),
            moving.dims()
        )));
    }
    let (w, h) = fixed.dims();
    if w < MIN_IMAGE_SIZE || h < MIN_IMAGE_SIZE {
        return Err(Error::TooSmall(format!(
            "registration needs at least {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}, got {w}x{h}"
        )));
    }
    Ok(())
}

/// Runs the strategy selected by `config.method`.
pub fn register(
    fixed: &Image2D,
    moving: &Image2D,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    config.validate()?;
    check_inputs(fixed, moving)?;
    let stages = build_stages(fixed, moving, config)?;

    let mut params = scale_params_between_levels(&config.initial, stages[0].scale);
    let mut traces = Vec::with_capacity(stages.len());
    for (i, stage) in stages.iter().enumerate() {
        if i > 0 {
            params = scale_params_between_levels(&params, stage.scale / stages[i - 1].scale);
        }
        if stage.objective(&params, config).is_err() {
            return Err(Error::LostOverlap { level: stage.level });
        }
        let opt = OptimizerConfig {
            seed: config.master_seed.wrapping_add(stage.level as u64),
            free: config.parameter_mask,
            ..config.optimizer
        };
        let start = params;
        let (best, trace) = optimize(
            |p| stage.objective(p, config).unwrap_or(f64::NEG_INFINITY),
            start,
            &opt,
        )?;
        params = best;
        traces.push(LevelTrace {
            level: stage.level,
            scale: stage.scale,
            start,
            trace,
        });
    }
    let finest = stages.last().expect("at least one stage").scale;
    let full = scale_params_between_levels(&params, 1.0 / finest);
    let max_mi_bits = traces
        .iter()
        .map(|t| t.trace.best_value)
        .fold(f64::NEG_INFINITY, f64::max);

    let (registered, mask) = apply_transform(config.method, moving, &full)?;
    let metrics = evaluate_images(fixed, &registered, &mask, &config.metric)?;
    Ok(RegistrationResult {
        method: config.method,
        params: full,
        center: CenterPixel::of(fixed),
        registered,
        mask,
        max_mi_bits,
        final_mi_bits: metrics.mi_bits,
        cc: metrics.cc,
        traces,
    })
}

pub fn register_pyramid(
    fixed: &Image2D,
    moving: &Image2D,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register(
        fixed,
        moving,
        &RegistrationConfig {
            method: Method::Pyramid,
            ..*config
        },
    )
}

pub fn register_wavelet(
    fixed: &Image2D,
    moving: &Image2D,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register(
        fixed,
        moving,
        &RegistrationConfig {
            method: Method::Wavelet,
            ..*config
        },
    )
}

pub fn register_dwt_pyramid(
    fixed: &Image2D,
    moving: &Image2D,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register(
        fixed,
        moving,
        &RegistrationConfig {
            method: Method::DwtPyramid,
            ..*config
        },
    )
}

/// Produces the registered image the way `method` does: a direct spatial
/// warp for the pyramid baseline, or warped sub-bands followed by the inverse
/// DWT for the wavelet methods. `params` are full-resolution.
pub fn apply_transform(
    method: Method,
    moving: &Image2D,
    params: &AffineParams,
) -> Result<(Image2D, Mask2D)> {
    let center = CenterPixel::of(moving);
    match method {
        Method::Pyramid => warp(moving, params, center, 0.0),
        Method::Wavelet | Method::DwtPyramid => {
            let bands = dwt2(moving)?;
            let sub_params = scale_params_between_levels(params, 0.5);
            let sub_center = stage_center(center, 0.5, SUBBAND_OFFSET);
            let mut sub_mask = None;
            let warped = bands.try_map(|_, plane| {
                let (img, mask) = warp(plane, &sub_params, sub_center, 0.0)?;
                sub_mask.get_or_insert(mask);
                Ok(img)
            })?;
            let registered = idwt2(&warped)?;
            let sub_mask = sub_mask.expect("four planes warped");
            let (w, h) = moving.dims();
            let mask = Mask2D::from_fn(w, h, |x, y| sub_mask.get(x / 2, y / 2));
            Ok((registered, mask))
        }
    }
}

fn evaluate_images(
    fixed: &Image2D,
    registered: &Image2D,
    mask: &Mask2D,
    metric: &MetricConfig,
) -> Result<Metrics> {
    if !fixed.same_dims(registered) {
        return Err(Error::Dimension(format!(
            "fixed {:?} vs registered {:?}",
            fixed.dims(),
            registered.dims()
        )));
    }
    let mi_bits = mutual_information_bits(fixed, registered, mask, metric)?;
    let cc = correlation_coefficient(fixed, registered, mask)?;
    Ok(Metrics {
        mi_bits,
        cc,
        overlap_pixels: mask.count(),
    })
}

/// Recomputes spatial-domain MI and CC between `fixed` and the registered
/// image over the result's mask.
pub fn evaluate(
    fixed: &Image2D,
    result: &RegistrationResult,
    metric: &MetricConfig,
) -> Result<Metrics> {
    evaluate_images(fixed, &result.registered, &result.mask, metric)
}
