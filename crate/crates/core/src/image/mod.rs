//! Single-channel floating-point rasters, validity masks, intensity remapping
//! and the grey/fuchsia difference overlay.

mod pnm;

pub use pnm::{load_mask, load_pgm, load_ppm, save_mask, save_pgm, save_ppm};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major single-channel image with real-valued, finite intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite intensity at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if either dimension is zero or `f` returns a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("from_fn produced an invalid image")
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Internal constructor for buffers already known to be valid.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// (min, max) over all pixels.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Applies `f` pixelwise. The result must stay finite.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn same_dims(&self, other: &Image2D) -> bool {
        self.dims() == other.dims()
    }
}

/// One validity flag per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask2D {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Pixelwise AND of two masks of equal size.
    pub fn and(&self, other: &Mask2D) -> Result<Mask2D> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "mask {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(Mask2D {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::Dimension(format!(
                "rgb data length {} does not match 3x{width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// Pixelwise intensity mappings used to synthesize a second modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "gamma")]
pub enum Remap {
    Identity,
    /// `min + max - x` over the image's own range.
    Invert,
    /// `min + (max - min) * ((x - min) / (max - min))^gamma`.
    Gamma(f64),
    /// `max * (1 - ln(1 + x) / ln(1 + max))`; needs nonnegative input.
    NegateLog,
}

impl FromStr for Remap {
    type Err = Error;

    /// Accepts `identity`, `invert`, `negate-log` and `gamma:<value>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "none" => Ok(Remap::Identity),
            "invert" => Ok(Remap::Invert),
            "negate-log" | "negate_log" => Ok(Remap::NegateLog),
            _ => {
                let gamma = s
                    .strip_prefix("gamma:")
                    .and_then(|g| g.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parameter(format!("unknown remap {s:?}")))?;
                if !(gamma > 0.0) {
                    return Err(Error::Parameter(format!("gamma must be > 0, got {gamma}")));
                }
                Ok(Remap::Gamma(gamma))
            }
        }
    }
}

impl fmt::Display for Remap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Remap::Identity => f.write_str("identity"),
            Remap::Invert => f.write_str("invert"),
            Remap::Gamma(g) => write!(f, "gamma:{g}"),
            Remap::NegateLog => f.write_str("negate-log"),
        }
    }
}

pub fn remap_intensity(image: &Image2D, mode: Remap) -> Result<Image2D> {
    let (lo, hi) = image.min_max();
    match mode {
        Remap::Identity => Ok(image.clone()),
        Remap::Invert => image.map(|v| lo + hi - v),
        Remap::Gamma(gamma) => {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::Parameter(format!("gamma must be > 0, got {gamma}")));
            }
            let range = hi - lo;
            if range == 0.0 {
                return Ok(image.clone());
            }
            image.map(|v| lo + range * ((v - lo) / range).powf(gamma))
        }
        Remap::NegateLog => {
            if lo < 0.0 {
                return Err(Error::Parameter(format!(
                    "negate-log needs nonnegative intensities, min is {lo}"
                )));
            }
            if hi == 0.0 {
                return Ok(image.clone());
            }
            let denom = hi.ln_1p();
            image.map(|v| hi * (1.0 - v.ln_1p() / denom))
        }
    }
}

/// Default agreement tolerance for [`overlay_diff`], as a fraction of the
/// fixed image's intensity range.
pub const OVERLAY_TOLERANCE: f64 = 0.1;

/// Grey where `fixed` and `registered` agree, fuchsia where they differ, black
/// outside the mask.
pub fn overlay_diff(fixed: &Image2D, registered: &Image2D, mask: &Mask2D) -> Result<RgbImage> {
    overlay_diff_with_tolerance(fixed, registered, mask, OVERLAY_TOLERANCE)
}

pub fn overlay_diff_with_tolerance(
    fixed: &Image2D,
    registered: &Image2D,
    mask: &Mask2D,
    tolerance: f64,
) -> Result<RgbImage> {
    if !fixed.same_dims(registered) || fixed.dims() != mask.dims() {
        return Err(Error::Dimension(format!(
            "overlay inputs fixed {:?}, registered {:?}, mask {:?}",
            fixed.dims(),
            registered.dims(),
            mask.dims()
        )));
    }
    let masked = |img: &Image2D| {
        img.data()
            .iter()
            .zip(mask.bits())
            .filter(|(_, &m)| m)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
                (lo.min(v), hi.max(v))
            })
    };
    let (flo, fhi) = masked(fixed);
    let (rlo, rhi) = masked(registered);
    let lo = flo.min(rlo);
    let hi = fhi.max(rhi);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let fixed_range = fhi - flo;
    let tau = tolerance * if fixed_range > 0.0 { fixed_range } else { span };

    let mut data = Vec::with_capacity(3 * fixed.width() * fixed.height());
    for ((&f, &r), &m) in fixed.data().iter().zip(registered.data()).zip(mask.bits()) {
        if !m {
            data.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        if (f - r).abs() <= tau {
            let v = to_u8(255.0 * (f - lo) / span);
            data.extend_from_slice(&[v, v, v]);
        } else {
            let d = ((f - r).abs() / span).min(1.0);
            let a = to_u8(127.0 + 128.0 * d);
            data.extend_from_slice(&[a, 0, a]);
        }
    }
    RgbImage::new(fixed.width(), fixed.height(), data)
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
