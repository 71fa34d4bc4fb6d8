//! Six-parameter affine model about a center pixel, and bilinear warping.
//!
//! Coordinates: pixel centers sit on integer coordinates, origin top-left,
//! x to the right, y downward. A parameter set maps a moving-image point `v`
//! to the fixed-image point
//!
//! ```text
//! u = A (v - c) + c + t,    A = R(theta) K(k) S(sx, sy)
//! ```
//!
//! and [`warp`] pulls samples through the inverse map, so the content of the
//! warped image moves by `+t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image2D, Mask2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub tx: f64,
    pub ty: f64,
    /// Radians, counterclockwise from the x axis.
    #[serde(rename = "theta_rad")]
    pub theta: f64,
    pub sx: f64,
    pub sy: f64,
    /// Shear along x.
    pub k: f64,
}

impl Default for AffineParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        tx: 0.0,
        ty: 0.0,
        theta: 0.0,
        sx: 1.0,
        sy: 1.0,
        k: 0.0,
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            tx,
            ty,
            ..Self::IDENTITY
        }
    }

    pub fn rigid(tx: f64, ty: f64, theta: f64) -> Self {
        Self {
            tx,
            ty,
            theta,
            ..Self::IDENTITY
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.tx, self.ty, self.theta, self.sx, self.sy, self.k]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            tx: a[0],
            ty: a[1],
            theta: a[2],
            sx: a[3],
            sy: a[4],
            k: a[5],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.sx > 0.0 && self.sy > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_valid() {
            return Err(Error::Parameter(format!(
                "affine parameters need finite values and positive scales, got {self:?}"
            )));
        }
        Ok(())
    }

    /// The parameters of the inverse map about the same center.
    pub fn inverse(&self, center: CenterPixel) -> Result<AffineParams> {
        center_adjusted(self, center)?.invert()?.decompose(center)
    }
}

/// Translation is the only resolution-dependent parameter.
pub fn scale_params_between_levels(params: &AffineParams, factor: f64) -> AffineParams {
    debug_assert!(factor > 0.0);
    AffineParams {
        tx: params.tx * factor,
        ty: params.ty * factor,
        ..*params
    }
}

/// The fixed point of the rotation/scale/skew part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterPixel {
    pub x: f64,
    pub y: f64,
}

impl CenterPixel {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// `((W - 1) / 2, (H - 1) / 2)`.
    pub fn of_dims(width: usize, height: usize) -> Self {
        Self {
            x: (width as f64 - 1.0) / 2.0,
            y: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn of(image: &Image2D) -> Self {
        Self::of_dims(image.width(), image.height())
    }
}

/// Parameters plus center, as exchanged in JSON files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteredParams {
    #[serde(flatten)]
    pub params: AffineParams,
    pub center: [f64; 2],
}

impl CenteredParams {
    pub fn new(params: AffineParams, center: CenterPixel) -> Self {
        Self {
            params,
            center: [center.x, center.y],
        }
    }

    pub fn center_pixel(&self) -> CenterPixel {
        CenterPixel::new(self.center[0], self.center[1])
    }
}

/// Homogeneous 3x3 matrix with bottom row `(0, 0, 1)`, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMatrix {
    m: [[f64; 3]; 3],
}

impl AffineMatrix {
    pub const IDENTITY: AffineMatrix = AffineMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Builds from the six entries `[g1 g2 g3; g4 g5 g6]`.
    pub fn from_entries(g: [f64; 6]) -> Self {
        Self {
            m: [[g[0], g[1], g[2]], [g[3], g[4], g[5]], [0.0, 0.0, 1.0]],
        }
    }

    /// `[g1, g2, g3, g4, g5, g6]`.
    pub fn entries(&self) -> [f64; 6] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]]
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det2(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn mul(&self, rhs: &AffineMatrix) -> AffineMatrix {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * rhs.m[k][j]).sum();
            }
        }
        AffineMatrix { m: out }
    }

    pub fn invert(&self) -> Result<AffineMatrix> {
        let det = self.det2();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Singular(det));
        }
        let [a, b, tx, c, d, ty] = self.entries();
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineMatrix::from_entries([
            ia,
            ib,
            -(ia * tx + ib * ty),
            ic,
            id,
            -(ic * tx + id * ty),
        ]))
    }

    /// Recovers `(tx, ty, theta, sx, sy, k)` such that
    /// `center_adjusted(params, center) == self`. Needs a positive determinant.
    pub fn decompose(&self, center: CenterPixel) -> Result<AffineParams> {
        let [g1, g2, h3, g4, g5, h6] = self.entries();
        let det = self.det2();
        if !(det > 0.0) {
            return Err(Error::Singular(det));
        }
        let sx = g1.hypot(g4);
        let theta = g4.atan2(g1);
        let (s, c) = theta.sin_cos();
        // R^T A = K S = [[sx, k sy], [0, sy]]
        let ks = c * g2 + s * g5;
        let sy = -s * g2 + c * g5;
        let k = ks / sy;
        // h = t + c - A c
        let tx = h3 - center.x + g1 * center.x + g2 * center.y;
        let ty = h6 - center.y + g4 * center.x + g5 * center.y;
        Ok(AffineParams {
            tx,
            ty,
            theta,
            sx,
            sy,
            k,
        })
    }
}

/// `Translation * Rotation * Skew * Scaling`, in closed form.
pub fn compose_matrix(params: &AffineParams) -> Result<AffineMatrix> {
    params.validate()?;
    let (s, c) = params.theta.sin_cos();
    let AffineParams {
        tx, ty, sx, sy, k, ..
    } = *params;
    Ok(AffineMatrix::from_entries([
        sx * c,
        sy * (k * c - s),
        tx,
        sx * s,
        sy * (k * s + c),
        ty,
    ]))
}

/// The composed matrix with its translation column adjusted so that the
/// rotation/scale/skew part acts about `center`:
/// `(g3 - g1 xt - g2 yt + xt, g6 - g4 xt - g5 yt + yt)`.
pub fn center_adjusted(params: &AffineParams, center: CenterPixel) -> Result<AffineMatrix> {
    let [g1, g2, g3, g4, g5, g6] = compose_matrix(params)?.entries();
    let (xt, yt) = (center.x, center.y);
    Ok(AffineMatrix::from_entries([
        g1,
        g2,
        g3 - g1 * xt - g2 * yt + xt,
        g4,
        g5,
        g6 - g4 * xt - g5 * yt + yt,
    ]))
}

/// Bilinear sample at a point already known to lie in `[0, W-1] x [0, H-1]`.
#[inline]
pub(crate) fn bilinear(image: &Image2D, x: f64, y: f64) -> f64 {
    let (w, h) = image.dims();
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let data = image.data();
    let p00 = data[y0 * w + x0];
    let p10 = data[y0 * w + x1];
    let p01 = data[y1 * w + x0];
    let p11 = data[y1 * w + x1];
    let top = p00 + fx * (p10 - p00);
    let bot = p01 + fx * (p11 - p01);
    top + fy * (bot - top)
}

const SUPPORT_SLACK: f64 = 1e-9;
const PARALLEL_MIN_PIXELS: usize = 256 * 256;

/// Resamples `moving` on its own grid through the inverse of
/// `center_adjusted(params, center)`. Pixels whose source falls outside the
/// bilinear support get `fill` and a cleared mask bit.
pub fn warp(
    moving: &Image2D,
    params: &AffineParams,
    center: CenterPixel,
    fill: f64,
) -> Result<(Image2D, Mask2D)> {
    let inv = center_adjusted(params, center)?.invert()?;
    Ok(warp_with_matrix(moving, &inv, fill))
}

/// Pull-warp with an explicit output-to-source matrix.
pub fn warp_with_matrix(
    moving: &Image2D,
    out_to_src: &AffineMatrix,
    fill: f64,
) -> (Image2D, Mask2D) {
    let (w, h) = moving.dims();
    let xmax = (w - 1) as f64;
    let ymax = (h - 1) as f64;
    let sample_row = |y: usize| {
        let mut vals = Vec::with_capacity(w);
        let mut bits = Vec::with_capacity(w);
        for x in 0..w {
            let (sx, sy) = out_to_src.apply(x as f64, y as f64);
            if sx >= -SUPPORT_SLACK
                && sy >= -SUPPORT_SLACK
                && sx <= xmax + SUPPORT_SLACK
                && sy <= ymax + SUPPORT_SLACK
            {
                vals.push(bilinear(moving, sx.clamp(0.0, xmax), sy.clamp(0.0, ymax)));
                bits.push(true);
            } else {
                vals.push(fill);
                bits.push(false);
            }
        }
        (vals, bits)
    };
    // Small rasters are cheaper to do inline than to hand to the pool.
    let rows: Vec<(Vec<f64>, Vec<bool>)> = if w * h >= PARALLEL_MIN_PIXELS {
        (0..h).into_par_iter().map(sample_row).collect()
    } else {
        (0..h).map(sample_row).collect()
    };
    let mut data = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for (v, b) in rows {
        data.extend(v);
        mask.extend(b);
    }
    (
        Image2D::from_raw(w, h, data),
        Mask2D::new(w, h, mask).expect("mask sized to image"),
    )
}
