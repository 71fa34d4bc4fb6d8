//! Mask-aware joint-histogram mutual information and Pearson correlation.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image2D, Mask2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub histogram_bins: usize,
    /// When false, `num_spatial_samples` masked pixels are drawn instead.
    pub use_all_pixels: bool,
    pub num_spatial_samples: usize,
    pub sample_seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            histogram_bins: 50,
            use_all_pixels: true,
            num_spatial_samples: 500,
            sample_seed: 0,
        }
    }
}

impl MetricConfig {
    pub fn with_bins(bins: usize) -> Self {
        Self {
            histogram_bins: bins,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.histogram_bins < 2 {
            return Err(Error::Parameter(format!(
                "histogram_bins must be >= 2, got {}",
                self.histogram_bins
            )));
        }
        if !self.use_all_pixels && self.num_spatial_samples < self.histogram_bins {
            return Err(Error::Parameter(format!(
                "num_spatial_samples ({}) must be >= histogram_bins ({})",
                self.num_spatial_samples, self.histogram_bins
            )));
        }
        Ok(())
    }
}

/// Hard-binned joint histogram. `counts[f * bins + m]` holds the number of
/// pixel pairs whose fixed intensity falls in bin `f` and moving in bin `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    pub bins: usize,
    pub counts: Vec<f64>,
    pub fixed_range: (f64, f64),
    pub moving_range: (f64, f64),
    pub total: f64,
    /// Either image was constant over the mask.
    pub degenerate: bool,
}

impl JointHistogram {
    /// Builds a histogram directly from counts (row = fixed bin).
    pub fn from_counts(bins: usize, counts: Vec<f64>) -> Result<Self> {
        if bins < 1 || counts.len() != bins * bins {
            return Err(Error::Dimension(format!(
                "expected {bins}x{bins} counts, got {}",
                counts.len()
            )));
        }
        if counts.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::Parameter(
                "histogram counts must be finite and >= 0".into(),
            ));
        }
        let total = counts.iter().sum();
        Ok(Self {
            bins,
            counts,
            fixed_range: (0.0, 0.0),
            moving_range: (0.0, 0.0),
            total,
            degenerate: bins == 1,
        })
    }

    pub fn count(&self, fixed_bin: usize, moving_bin: usize) -> f64 {
        self.counts[fixed_bin * self.bins + moving_bin]
    }

    pub fn transposed(&self) -> JointHistogram {
        let n = self.bins;
        let mut counts = vec![0.0; n * n];
        for f in 0..n {
            for m in 0..n {
                counts[m * n + f] = self.counts[f * n + m];
            }
        }
        JointHistogram {
            bins: n,
            counts,
            fixed_range: self.moving_range,
            moving_range: self.fixed_range,
            total: self.total,
            degenerate: self.degenerate,
        }
    }

    /// Row sums (fixed marginal), normalized to probabilities.
    pub fn fixed_marginal(&self) -> Vec<f64> {
        let n = self.bins;
        (0..n)
            .map(|f| (0..n).map(|m| self.counts[f * n + m]).sum::<f64>() / self.total)
            .collect()
    }

    /// Column sums (moving marginal), normalized to probabilities.
    pub fn moving_marginal(&self) -> Vec<f64> {
        let n = self.bins;
        (0..n)
            .map(|m| (0..n).map(|f| self.counts[f * n + m]).sum::<f64>() / self.total)
            .collect()
    }
}

/// Shannon entropy in bits; zero-probability entries are skipped.
pub fn entropy_bits(probabilities: &[f64]) -> f64 {
    sorted_sum(
        probabilities
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .collect(),
    )
}

/// Sum in ascending order so the result does not depend on term order.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

#[inline]
fn bin_of(v: f64, lo: f64, scale: f64, bins: usize) -> usize {
    // Top edge inclusive.
    (((v - lo) * scale) as usize).min(bins - 1)
}

fn masked_range(image: &Image2D, indices: &[usize]) -> (f64, f64) {
    let data = image.data();
    indices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(data[i]), hi.max(data[i]))
        })
}

fn check_dims(a: &Image2D, b: &Image2D, mask: &Mask2D) -> Result<()> {
    if a.dims() != b.dims() || a.dims() != mask.dims() {
        return Err(Error::Dimension(format!(
            "images {:?} and {:?}, mask {:?}",
            a.dims(),
            b.dims(),
            mask.dims()
        )));
    }
    Ok(())
}

fn selected_indices(mask: &Mask2D, config: &MetricConfig) -> Result<Vec<usize>> {
    let all: Vec<usize> = mask
        .bits()
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    if all.is_empty() {
        return Err(Error::NoOverlap);
    }
    if config.use_all_pixels || config.num_spatial_samples >= all.len() {
        return Ok(all);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.sample_seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, all.len(), config.num_spatial_samples)
        .into_iter()
        .map(|k| all[k])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Bins each masked pixel pair linearly over the masked [min, max] of each
/// image. Ranges are recomputed on every call.
pub fn joint_histogram(
    fixed: &Image2D,
    moving: &Image2D,
    mask: &Mask2D,
    config: &MetricConfig,
) -> Result<JointHistogram> {
    config.validate()?;
    check_dims(fixed, moving, mask)?;
    let indices = selected_indices(mask, config)?;
    let bins = config.histogram_bins;
    let fixed_range = masked_range(fixed, &indices);
    let moving_range = masked_range(moving, &indices);
    let degenerate = fixed_range.0 == fixed_range.1 || moving_range.0 == moving_range.1;

    let scale = |(lo, hi): (f64, f64)| {
        if hi > lo {
            bins as f64 / (hi - lo)
        } else {
            0.0
        }
    };
    let (fs, ms) = (scale(fixed_range), scale(moving_range));
    let (fd, md) = (fixed.data(), moving.data());
    let mut counts = vec![0.0; bins * bins];
    for &i in &indices {
        let f = bin_of(fd[i], fixed_range.0, fs, bins);
        let m = bin_of(md[i], moving_range.0, ms, bins);
        counts[f * bins + m] += 1.0;
    }
    Ok(JointHistogram {
        bins,
        counts,
        fixed_range,
        moving_range,
        total: indices.len() as f64,
        degenerate,
    })
}

/// `sum p(f,m) log2(p(f,m) / (p_f(f) p_m(m)))` in bits.
pub fn mutual_information(hist: &JointHistogram) -> f64 {
    if hist.degenerate || hist.total <= 0.0 {
        return 0.0;
    }
    let n = hist.bins;
    let pf = hist.fixed_marginal();
    let pm = hist.moving_marginal();
    let mut terms = Vec::new();
    for (row, &pf) in hist.counts.chunks_exact(n).zip(&pf) {
        for (&c, &pm) in row.iter().zip(&pm) {
            if c > 0.0 {
                let p = c / hist.total;
                terms.push(p * (p / (pf * pm)).log2());
            }
        }
    }
    sorted_sum(terms)
}

/// Convenience: histogram then MI.
pub fn mutual_information_bits(
    fixed: &Image2D,
    moving: &Image2D,
    mask: &Mask2D,
    config: &MetricConfig,
) -> Result<f64> {
    Ok(mutual_information(&joint_histogram(
        fixed, moving, mask, config,
    )?))
}

/// Pearson correlation over the masked pixels.
pub fn correlation_coefficient(a: &Image2D, b: &Image2D, mask: &Mask2D) -> Result<f64> {
    check_dims(a, b, mask)?;
    let pairs: Vec<(f64, f64)> = a
        .data()
        .iter()
        .zip(b.data())
        .zip(mask.bits())
        .filter_map(|((&x, &y), &m)| m.then_some((x, y)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    if pairs.len() < 2 {
        return Err(Error::UndefinedCorrelation);
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Metric record as written to `metrics.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mi_bits: f64,
    pub cc: f64,
    pub overlap_pixels: usize,
}
