//! Single-level orthonormal 2-D Haar analysis and synthesis.
//!
//! Each non-overlapping 2x2 block `[a b; c d]` (a at even x and even y) maps to
//!
//! ```text
//! LL = (a + b + c + d) / 2
//! LH = (a - b + c - d) / 2   horizontal (column-wise) differences
//! HL = (a + b - c - d) / 2   vertical (row-wise) differences
//! HH = (a - b - c + d) / 2
//! ```
//!
//! The 4x4 system is orthonormal, so synthesis uses the same matrix.
//! Odd dimensions are padded by replicating the last row/column.

use crate::error::{Error, Result};
use crate::image::Image2D;

/// The four coefficient planes of one DWT level.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBands {
    pub ll: Image2D,
    pub lh: Image2D,
    pub hl: Image2D,
    pub hh: Image2D,
    pub original_width: usize,
    pub original_height: usize,
}

/// Band identifiers in their fixed reduction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    LL,
    LH,
    HL,
    HH,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::LL, Band::LH, Band::HL, Band::HH];

    pub fn name(self) -> &'static str {
        match self {
            Band::LL => "ll",
            Band::LH => "lh",
            Band::HL => "hl",
            Band::HH => "hh",
        }
    }
}

impl SubBands {
    pub fn new(
        ll: Image2D,
        lh: Image2D,
        hl: Image2D,
        hh: Image2D,
        original_width: usize,
        original_height: usize,
    ) -> Result<Self> {
        let dims = ll.dims();
        if lh.dims() != dims || hl.dims() != dims || hh.dims() != dims {
            return Err(Error::Dimension(format!(
                "sub-band planes differ: ll {:?}, lh {:?}, hl {:?}, hh {:?}",
                ll.dims(),
                lh.dims(),
                hl.dims(),
                hh.dims()
            )));
        }
        if original_width.div_ceil(2) != dims.0 || original_height.div_ceil(2) != dims.1 {
            return Err(Error::Dimension(format!(
                "original size {original_width}x{original_height} incompatible with planes {dims:?}"
            )));
        }
        Ok(Self {
            ll,
            lh,
            hl,
            hh,
            original_width,
            original_height,
        })
    }

    pub fn band(&self, band: Band) -> &Image2D {
        match band {
            Band::LL => &self.ll,
            Band::LH => &self.lh,
            Band::HL => &self.hl,
            Band::HH => &self.hh,
        }
    }

    /// Plane dimensions.
    pub fn dims(&self) -> (usize, usize) {
        self.ll.dims()
    }

    /// Applies `f` to every plane, keeping the recorded original size.
    pub fn try_map(
        &self,
        mut f: impl FnMut(Band, &Image2D) -> Result<Image2D>,
    ) -> Result<SubBands> {
        SubBands::new(
            f(Band::LL, &self.ll)?,
            f(Band::LH, &self.lh)?,
            f(Band::HL, &self.hl)?,
            f(Band::HH, &self.hh)?,
            self.original_width,
            self.original_height,
        )
    }
}

pub fn dwt2(image: &Image2D) -> Result<SubBands> {
    let (w, h) = image.dims();
    if w < 2 || h < 2 {
        return Err(Error::TooSmallForDwt {
            width: w,
            height: h,
        });
    }
    let (bw, bh) = (w.div_ceil(2), h.div_ceil(2));
    let px = |x: usize, y: usize| image.get(x.min(w - 1), y.min(h - 1));

    let n = bw * bh;
    let (mut ll, mut lh, mut hl, mut hh) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for j in 0..bh {
        for i in 0..bw {
            let (x, y) = (2 * i, 2 * j);
            let a = px(x, y);
            let b = px(x + 1, y);
            let c = px(x, y + 1);
            let d = px(x + 1, y + 1);
            ll.push((a + b + c + d) * 0.5);
            lh.push((a - b + c - d) * 0.5);
            hl.push((a + b - c - d) * 0.5);
            hh.push((a - b - c + d) * 0.5);
        }
    }
    Ok(SubBands {
        ll: Image2D::from_raw(bw, bh, ll),
        lh: Image2D::from_raw(bw, bh, lh),
        hl: Image2D::from_raw(bw, bh, hl),
        hh: Image2D::from_raw(bw, bh, hh),
        original_width: w,
        original_height: h,
    })
}

pub fn idwt2(bands: &SubBands) -> Result<Image2D> {
    // Revalidate: fields are public and may have been edited after dwt2.
    let bands = SubBands::new(
        bands.ll.clone(),
        bands.lh.clone(),
        bands.hl.clone(),
        bands.hh.clone(),
        bands.original_width,
        bands.original_height,
    )?;
    let (bw, bh) = bands.dims();
    let (w, h) = (bands.original_width, bands.original_height);
    let mut out = vec![0.0; w * h];
    for j in 0..bh {
        for i in 0..bw {
            let s = bands.ll.get(i, j);
            let dx = bands.lh.get(i, j);
            let dy = bands.hl.get(i, j);
            let dd = bands.hh.get(i, j);
            let block = [
                (s + dx + dy + dd) * 0.5,
                (s - dx + dy - dd) * 0.5,
                (s + dx - dy - dd) * 0.5,
                (s - dx - dy + dd) * 0.5,
            ];
            for (k, v) in block.into_iter().enumerate() {
                let x = 2 * i + (k & 1);
                let y = 2 * j + (k >> 1);
                if x < w && y < h {
                    out[y * w + x] = v;
                }
            }
        }
    }
    Ok(Image2D::from_raw(w, h, out))
}
