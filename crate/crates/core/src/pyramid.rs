//! Gaussian pyramids built with a separable 5-tap generating kernel.

use crate::error::{Error, Result};
use crate::image::Image2D;

/// Symmetric 5-tap kernel `w(-2..=2)` that sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel5(pub [f64; 5]);

impl Kernel5 {
    /// The binomial kernel `[1, 4, 6, 4, 1] / 16`.
    pub const BINOMIAL: Kernel5 =
        Kernel5([1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0]);

    /// Weight at offset `m` in `-2..=2`.
    pub fn weight(&self, m: isize) -> f64 {
        self.0[(m + 2) as usize]
    }

    /// Separable 2-D weight `w(m, n) = w(m) w(n)`.
    pub fn weight2(&self, m: isize, n: isize) -> f64 {
        self.weight(m) * self.weight(n)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.0;
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || w[0] != w[4] || w[1] != w[3] {
            return Err(Error::Parameter(format!(
                "kernel must be symmetric and sum to 1, got {w:?}"
            )));
        }
        Ok(())
    }
}

impl Default for Kernel5 {
    fn default() -> Self {
        Self::BINOMIAL
    }
}

/// Smallest side a reduced level may have before the pyramid is truncated.
pub const MIN_LEVEL_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct GaussianPyramid {
    /// `levels[0]` is the original image; each following level is half size.
    pub levels: Vec<Image2D>,
    pub kernel: Kernel5,
    /// Set when fewer levels than requested were built because the next one
    /// would have dropped below [`MIN_LEVEL_SIZE`].
    pub truncated: bool,
}

impl GaussianPyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn coarsest(&self) -> &Image2D {
        self.levels.last().expect("pyramid always holds level 0")
    }
}

/// Mirror an index into `0..len` without repeating the edge sample.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= len as isize {
        r = period - r;
    }
    r as usize
}

/// One REDUCE step: blur with `kernel` (separably) and keep every second
/// sample. Output is `(ceil(W/2), ceil(H/2))`.
pub fn reduce(image: &Image2D, kernel: &Kernel5) -> Result<Image2D> {
    let (w, h) = image.dims();
    if w < 2 || h < 2 {
        return Err(Error::TooSmall(format!(
            "reduce needs at least 2x2, got {w}x{h}"
        )));
    }
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));

    // Horizontal pass at subsampled columns, all rows.
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = image.row(y);
        for x in 0..ow {
            let cx = 2 * x as isize;
            tmp[y * ow + x] = (-2..=2)
                .map(|m| kernel.weight(m) * row[reflect(cx + m, w)])
                .sum();
        }
    }
    // Vertical pass at subsampled rows.
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        let cy = 2 * y as isize;
        for x in 0..ow {
            out[y * ow + x] = (-2..=2)
                .map(|n| kernel.weight(n) * tmp[reflect(cy + n, h) * ow + x])
                .sum();
        }
    }
    Ok(Image2D::from_raw(ow, oh, out))
}

/// Builds up to `num_levels` levels with the binomial kernel.
pub fn build_pyramid(image: &Image2D, num_levels: usize) -> Result<GaussianPyramid> {
    build_pyramid_with(image, num_levels, Kernel5::BINOMIAL)
}

pub fn build_pyramid_with(
    image: &Image2D,
    num_levels: usize,
    kernel: Kernel5,
) -> Result<GaussianPyramid> {
    if num_levels < 1 {
        return Err(Error::Parameter("num_levels must be at least 1".into()));
    }
    kernel.validate()?;
    let mut levels = vec![image.clone()];
    let mut truncated = false;
    while levels.len() < num_levels {
        let prev = levels.last().expect("nonempty");
        let (nw, nh) = (prev.width().div_ceil(2), prev.height().div_ceil(2));
        if nw < MIN_LEVEL_SIZE || nh < MIN_LEVEL_SIZE || prev.width() < 2 || prev.height() < 2 {
            truncated = true;
            break;
        }
        let next = reduce(prev, &kernel)?;
        levels.push(next);
    }
    Ok(GaussianPyramid {
        levels,
        kernel,
        truncated,
    })
}
