//! (1+1) evolution strategy over the six affine parameters.
//!
//! Each iteration mutates the parent with `radius * scales * N(0, I)`. A
//! strictly better child replaces the parent and grows the radius by the
//! growth factor; otherwise the radius shrinks by
//! `growth_factor^(-shrink_exponent)`.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::AffineParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub growth_factor: f64,
    pub epsilon: f64,
    pub initial_radius: f64,
    pub max_iterations: usize,
    pub shrink_exponent: f64,
    /// Step scale per parameter in `(tx, ty, theta, sx, sy, k)` order.
    pub param_scales: [f64; 6],
    /// Parameters with `false` are never mutated.
    pub free: [bool; 6],
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            growth_factor: 1.01,
            epsilon: 1.5e-6,
            initial_radius: 0.001,
            max_iterations: 500,
            shrink_exponent: 0.25,
            param_scales: [10.0, 10.0, 0.1, 0.05, 0.05, 0.05],
            free: [true; 6],
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Parameter(what));
        if !(self.growth_factor > 1.0) {
            return bad(format!(
                "growth_factor must be > 1, got {}",
                self.growth_factor
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.initial_radius > self.epsilon) {
            return bad(format!(
                "initial_radius ({}) must exceed epsilon ({})",
                self.initial_radius, self.epsilon
            ));
        }
        if !(self.shrink_exponent > 0.0) {
            return bad(format!(
                "shrink_exponent must be > 0, got {}",
                self.shrink_exponent
            ));
        }
        if self
            .param_scales
            .iter()
            .any(|&s| !(s > 0.0) || !s.is_finite())
        {
            return bad(format!(
                "param_scales must all be > 0, got {:?}",
                self.param_scales
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    RadiusBelowEpsilon,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub candidate: AffineParams,
    /// Objective at the candidate; `-inf` for out-of-domain candidates.
    pub value: f64,
    pub accepted: bool,
    /// Radius used to draw this candidate.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerTrace {
    pub records: Vec<IterationRecord>,
    pub initial_params: AffineParams,
    pub initial_value: f64,
    pub best_value: f64,
    pub best_params: AffineParams,
    /// Radius after the last update.
    pub final_radius: f64,
    pub termination_reason: TerminationReason,
}

impl OptimizerTrace {
    /// CSV columns: iteration, mi_bits, accepted, radius, tx, ty, theta, sx, sy, k.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ser = |e: csv::Error| Error::Serialize(e.to_string());
        w.write_record([
            "iteration",
            "mi_bits",
            "accepted",
            "radius",
            "tx",
            "ty",
            "theta",
            "sx",
            "sy",
            "k",
        ])
        .map_err(ser)?;
        for r in &self.records {
            let p = r.candidate;
            w.write_record(&[
                r.iteration.to_string(),
                r.value.to_string(),
                (r.accepted as u8).to_string(),
                r.radius.to_string(),
                p.tx.to_string(),
                p.ty.to_string(),
                p.theta.to_string(),
                p.sx.to_string(),
                p.sy.to_string(),
                p.k.to_string(),
            ])
            .map_err(ser)?;
        }
        w.flush().map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Maximizes `objective` starting from `p0`. Non-finite objective values mark
/// a candidate as unusable; it is then rejected like any other failure.
pub fn optimize<F>(
    mut objective: F,
    p0: AffineParams,
    config: &OptimizerConfig,
) -> Result<(AffineParams, OptimizerTrace)>
where
    F: FnMut(&AffineParams) -> f64,
{
    config.validate()?;
    p0.validate()?;
    let initial_value = objective(&p0);
    if !initial_value.is_finite() {
        return Err(Error::InvalidStart);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shrink = config.growth_factor.powf(-config.shrink_exponent);
    let mut parent = p0;
    let mut parent_value = initial_value;
    let mut radius = config.initial_radius;
    let mut records = Vec::new();
    let mut reason = TerminationReason::MaxIterations;

    for iteration in 0..config.max_iterations {
        if radius < config.epsilon {
            reason = TerminationReason::RadiusBelowEpsilon;
            break;
        }
        let mut step = [0.0; 6];
        for (i, s) in step.iter_mut().enumerate() {
            let n: f64 = StandardNormal.sample(&mut rng);
            if config.free[i] {
                *s = radius * config.param_scales[i] * n;
            }
        }
        let base = parent.to_array();
        let candidate = AffineParams::from_array(std::array::from_fn(|i| base[i] + step[i]));

        let value = if candidate.sx > 0.0 && candidate.sy > 0.0 {
            objective(&candidate)
        } else {
            f64::NEG_INFINITY
        };
        let accepted = value.is_finite() && value > parent_value;
        records.push(IterationRecord {
            iteration,
            candidate,
            value: if value.is_finite() {
                value
            } else {
                f64::NEG_INFINITY
            },
            accepted,
            radius,
        });
        if accepted {
            parent = candidate;
            parent_value = value;
            radius *= config.growth_factor;
        } else {
            radius *= shrink;
        }
    }
    if reason == TerminationReason::MaxIterations
        && radius < config.epsilon
        && records.len() < config.max_iterations
    {
        reason = TerminationReason::RadiusBelowEpsilon;
    }

    let trace = OptimizerTrace {
        records,
        initial_params: p0,
        initial_value,
        best_value: parent_value,
        best_params: parent,
        final_radius: radius,
        termination_reason: reason,
    };
    Ok((parent, trace))
}
