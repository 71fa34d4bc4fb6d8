//! Binary Netpbm I/O: P5 graymaps (8/16-bit) and P6 pixmaps.
//!
//! Headers are written as `magic\n<width> <height>\n<maxval>\n`. The reader
//! also accepts arbitrary whitespace and `#` comments between header tokens.

use std::fs;
use std::path::Path;

use super::{Image2D, Mask2D, RgbImage};
use crate::error::{Error, Result};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn load_err(path: &Path, field: &'static str, reason: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        field,
        reason: reason.into(),
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(load_err(path, "magic", "file too short"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;

    let mut next_token = |field: &'static str| -> Result<u32> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(load_err(path, field, "unexpected end of header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(load_err(path, field, "expected a decimal integer"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        let value = text
            .parse::<u32>()
            .map_err(|e| load_err(path, field, e.to_string()))?;
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(pos) {
            Some(c) if c.is_ascii_whitespace() => pos += 1,
            _ => return Err(load_err(path, field, "missing whitespace after value")),
        }
        Ok(value)
    };

    let width = next_token("width")? as usize;
    let height = next_token("height")? as usize;
    let maxval = next_token("maxval")?;
    if width == 0 || height == 0 {
        return Err(load_err(path, "width", "dimensions must be nonzero"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(load_err(
            path,
            "maxval",
            format!("{maxval} not in 1..=65535"),
        ));
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        data_offset: pos,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads samples in row-major order, decoding 16-bit big-endian when
/// `maxval > 255`.
fn decode_samples(bytes: &[u8], header: &Header, channels: usize, path: &Path) -> Result<Vec<u32>> {
    let count = header.width * header.height * channels;
    let bps = if header.maxval > 255 { 2 } else { 1 };
    let payload = &bytes[header.data_offset..];
    if payload.len() < count * bps {
        return Err(load_err(
            path,
            "payload",
            format!(
                "truncated: need {} bytes, found {}",
                count * bps,
                payload.len()
            ),
        ));
    }
    let samples = if bps == 1 {
        payload[..count].iter().map(|&b| b as u32).collect()
    } else {
        payload[..2 * count]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    };
    Ok(samples)
}

/// Loads a binary (P5) graymap; intensities are returned in `[0, maxval]`.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image2D> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let header = parse_header(&bytes, path)?;
    if &header.magic != b"P5" {
        return Err(load_err(
            path,
            "magic",
            format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(&header.magic)
            ),
        ));
    }
    let samples = decode_samples(&bytes, &header, 1, path)?;
    Ok(Image2D::from_raw(
        header.width,
        header.height,
        samples.into_iter().map(f64::from).collect(),
    ))
}

fn quantize(v: f64, maxval: u32) -> u32 {
    // Half-up rounding after clamping.
    (v.clamp(0.0, maxval as f64) + 0.5)
        .floor()
        .min(maxval as f64) as u32
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a P5 graymap. Intensities are clamped to `[0, maxval]` and rounded
/// half-up; `maxval` must be 255 or 65535.
pub fn save_pgm(image: &Image2D, path: impl AsRef<Path>, maxval: u32) -> Result<()> {
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Parameter(format!(
            "maxval must be 255 or 65535, got {maxval}"
        )));
    }
    let mut out = format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).into_bytes();
    if maxval == 255 {
        out.extend(image.data().iter().map(|&v| quantize(v, maxval) as u8));
    } else {
        for &v in image.data() {
            out.extend_from_slice(&(quantize(v, maxval) as u16).to_be_bytes());
        }
    }
    write_file(path.as_ref(), &out)
}

/// Writes a mask as an 8-bit P5 with 255 for valid pixels and 0 elsewhere.
pub fn save_mask(mask: &Mask2D, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    write_file(path.as_ref(), &out)
}

/// Loads a P5 graymap as a mask: nonzero samples are valid.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask2D> {
    let img = load_pgm(path)?;
    let bits = img.data().iter().map(|&v| v != 0.0).collect();
    Mask2D::new(img.width(), img.height(), bits)
}

/// Writes a binary (P6) pixmap with maxval 255.
pub fn save_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    write_file(path.as_ref(), &out)
}

/// Reads an 8-bit binary (P6) pixmap.
pub fn load_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let header = parse_header(&bytes, path)?;
    if &header.magic != b"P6" {
        return Err(load_err(
            path,
            "magic",
            format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(&header.magic)
            ),
        ));
    }
    if header.maxval > 255 {
        return Err(load_err(path, "maxval", "only 8-bit P6 is supported"));
    }
    let samples = decode_samples(&bytes, &header, 3, path)?;
    RgbImage::new(
        header.width,
        header.height,
        samples.into_iter().map(|s| s as u8).collect(),
    )
}
