//! `SFL1` flow files and Middlebury `.flo` interchange.
//!
//! SFL1 layout, all little-endian:
//!
//! ```text
//! "SFL1" | u32 kind | u32 width | u32 height | u32 n | n × u32 params
//!        | width·height × (f32 u, f32 v) | width·height × u8 flags
//! ```
//!
//! `kind` is 0 equirect, 1 tri-cylinder, 2 cube-padding. Tri-cylinder
//! params hold the half FOV as f32 bits; cube-padding params are face size
//! and pad width.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FlowField, VALID};
use crate::error::{Error, Result};
use crate::projection::{ProjectionKind, ProjectionSpec};

pub const FLOW_MAGIC: &[u8; 4] = b"SFL1";
const FLO_MAGIC: f32 = 202021.25;
/// Middlebury marks unknown flow with components above 1e9.
const FLO_UNKNOWN: f32 = 1e10;

fn encode(field: &FlowField) -> Result<Vec<u8>> {
    field.check_dims()?;
    let w = field.width();
    let words = field.spec.param_words();
    let n = field.len();
    let mut buf = Vec::with_capacity(24 + 4 * words.len() + 9 * n);
    buf.extend_from_slice(FLOW_MAGIC);
    for word in [
        field.spec.kind().code(),
        w as u32,
        field.height() as u32,
        words.len() as u32,
    ]
    .into_iter()
    .chain(words)
    {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    for i in 0..n {
        let (u, v) = (field.u[i] as f32, field.v[i] as f32);
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::NonFinite { x: i % w, y: i / w });
        }
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&field.flags);
    Ok(buf)
}

fn decode(bytes: &[u8]) -> Result<FlowField> {
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format("truncated flow file".into()))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != FLOW_MAGIC {
        return Err(Error::Format("bad magic, expected SFL1".into()));
    }
    let mut word = || -> Result<u32> {
        let b = take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    let kind_code = word()?;
    let kind = ProjectionKind::from_code(kind_code)
        .ok_or_else(|| Error::Format(format!("unknown projection kind {kind_code}")))?;
    let (w, h) = (word()? as usize, word()? as usize);
    let count = word()? as usize;
    if count > 16 {
        return Err(Error::Format(format!(
            "implausible parameter count {count}"
        )));
    }
    let params = (0..count).map(|_| word()).collect::<Result<Vec<_>>>()?;
    let spec = ProjectionSpec::from_words(kind, w, h, &params)?;
    let n = w * h;
    let mut field = FlowField::empty(spec);
    let payload = take(8 * n)?;
    for (i, c) in payload.chunks_exact(8).enumerate() {
        field.u[i] = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        field.v[i] = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
    }
    field.flags.copy_from_slice(take(n)?);
    Ok(field)
}

/// Writes an SFL1 file. Components are stored as f32; NaN or infinite
/// components are rejected.
pub fn write_flow(field: &FlowField, path: &Path) -> Result<()> {
    let bytes = encode(field)?;
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Writes an equirect field as Middlebury `.flo` in pixel units.
pub fn write_flo(field: &FlowField, path: &Path) -> Result<()> {
    field.ensure_equirect()?;
    let (w, h) = field.spec.dims();
    let mut buf = Vec::with_capacity(12 + 8 * w * h);
    buf.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    buf.extend_from_slice(&(w as i32).to_le_bytes());
    buf.extend_from_slice(&(h as i32).to_le_bytes());
    for i in 0..w * h {
        let (du, dv) = if field.is_valid(i) {
            let (du, dv) = field.equirect_to_pixels(field.u[i], field.v[i]);
            (du as f32, dv as f32)
        } else {
            (FLO_UNKNOWN, FLO_UNKNOWN)
        };
        buf.extend_from_slice(&du.to_le_bytes());
        buf.extend_from_slice(&dv.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a Middlebury `.flo` as pixel-unit equirect flow, converting to radians.
pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::Format("truncated .flo header".into()));
    }
    let f32_at =
        |i: usize| f32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let i32_at =
        |i: usize| i32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    if f32_at(0) != FLO_MAGIC {
        return Err(Error::Format("bad magic, expected PIEH".into()));
    }
    let (w, h) = (i32_at(4), i32_at(8));
    if w <= 0 || h <= 0 {
        return Err(Error::Format(format!("bad .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let spec = ProjectionSpec::Equirect {
        width: w,
        height: h,
    };
    spec.validate().map_err(|e| Error::Format(e.to_string()))?;
    if bytes.len() < 12 + 8 * w * h {
        return Err(Error::Format("truncated .flo payload".into()));
    }
    let mut field = FlowField::empty(spec);
    for i in 0..w * h {
        let (du, dv) = (f32_at(12 + 8 * i), f32_at(16 + 8 * i));
        if du.abs() > 1e9 || dv.abs() > 1e9 || !du.is_finite() || !dv.is_finite() {
            continue;
        }
        let (u, v) = FlowField::equirect_from_pixels(&spec, du as f64, dv as f64);
        field.u[i] = u;
        field.v[i] = v;
        field.flags[i] = VALID;
    }
    Ok(field)
}
