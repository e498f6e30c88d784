//! Raster and kernel files.
//!
//! Two raster formats are supported:
//!
//! * binary PGM (`P5`, maxval 255): read as `byte/255`, written by clamping to
//!   `[0, peak]` and rounding `v/peak·255` half up;
//! * FRAS: the magic `FRAS`, little-endian `u32` width and height, then
//!   `width·height` little-endian `f64` values in row-major order. Lossless.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::RoiMask;
use crate::operators::Kernel;
use crate::raster::Raster;

const FRAS_MAGIC: &[u8; 4] = b"FRAS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Pgm,
    Fras,
}

impl RasterFormat {
    /// Picks the format from the file extension: `.pgm` or `.fras`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("pgm") => Ok(RasterFormat::Pgm),
            Some("fras") => Ok(RasterFormat::Fras),
            _ => Err(Error::Format(format!("unknown raster extension: {}", path.display()))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            RasterFormat::Pgm => "pgm",
            RasterFormat::Fras => "fras",
        }
    }
}

/// Reads a PGM or FRAS raster, detected from the magic bytes.
pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    decode_raster(&fs::read(path)?)
}

pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    if bytes.starts_with(FRAS_MAGIC) {
        decode_fras(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(Error::Format("unrecognized magic bytes".into()))
    }
}

pub fn save_raster(path: impl AsRef<Path>, raster: &Raster, format: RasterFormat, peak: f64) -> Result<()> {
    let bytes = match format {
        RasterFormat::Pgm => encode_pgm(raster, peak)?,
        RasterFormat::Fras => encode_fras(raster)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_fras(raster: &Raster) -> Result<Vec<u8>> {
    let (w, h) = (dim_u32(raster.width())?, dim_u32(raster.height())?);
    let mut out = Vec::with_capacity(12 + 8 * raster.len());
    out.extend_from_slice(FRAS_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for v in raster.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn dim_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} does not fit in 32 bits")))
}

pub fn decode_fras(bytes: &[u8]) -> Result<Raster> {
    if bytes.len() < 12 || &bytes[..4] != FRAS_MAGIC {
        return Err(Error::Format("truncated FRAS header".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes")) as usize;
    let (w, h) = (word(4), word(8));
    let n = w.checked_mul(h).filter(|&n| n > 0).ok_or_else(|| Error::Format(format!("invalid FRAS size {w}x{h}")))?;
    let payload = &bytes[12..];
    if payload.len() != n * 8 {
        return Err(Error::Format(format!("FRAS payload has {} bytes, expected {}", payload.len(), n * 8)));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Raster::new(w, h, values)
}

/// Quantizes with `floor(clamp(v, 0, peak)/peak·255 + 0.5)`.
pub fn encode_pgm(raster: &Raster, peak: f64) -> Result<Vec<u8>> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Domain(format!("PGM peak must be positive, got {peak}")));
    }
    let mut out = format!("P5\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    out.extend(raster.values().iter().map(|&v| {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, peak) };
        (v / peak * 255.0 + 0.5).floor().min(255.0) as u8
    }));
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Raster> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        skip_space_and_comments(bytes, &mut pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit PGM is supported, maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("malformed PGM header".into()));
    }
    pos += 1;
    let n = w.checked_mul(h).filter(|&n| n > 0).ok_or_else(|| Error::Format(format!("invalid PGM size {w}x{h}")))?;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(Error::Format(format!("PGM payload has {} bytes, expected {n}", payload.len())));
    }
    Raster::new(w, h, payload[..n].iter().map(|&b| f64::from(b) / 255.0).collect())
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<Kernel> {
    Kernel::parse(&fs::read_to_string(path)?)
}

pub fn save_kernel(path: impl AsRef<Path>, kernel: &Kernel) -> Result<()> {
    fs::write(path, kernel.to_text())?;
    Ok(())
}

/// Loads a region of interest: every strictly positive pixel is inside.
pub fn load_mask(path: impl AsRef<Path>, label: impl Into<String>) -> Result<RoiMask> {
    RoiMask::from_raster(&load_raster(path)?, label)
}
