//! `BSC1` packed crop dataset.
//!
//! Header: `"BSC1"`, then W, S and the crop count as u32. Each crop is a
//! label byte followed by `W * W * 3` f32 pixels. Little-endian.

use std::path::Path;

use visbeam_core::crops::{CropLabel, LabeledCrop};

use super::{read_bytes, write_atomic, Reader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BSC1";

/// Crops are written with their light factor already applied.
pub fn encode(crops: &[LabeledCrop], window: usize, stride: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + crops.len() * (1 + window * window * 12));
    out.extend_from_slice(MAGIC);
    for v in [window, stride, crops.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for c in crops {
        if c.window != window {
            return Err(Error::Config(format!("crop of extent {} in a {window}-pixel dataset", c.window)));
        }
        out.push(c.label as u8);
        for v in c.tensor().data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub struct CropFile {
    pub window: usize,
    pub stride: usize,
    pub crops: Vec<LabeledCrop>,
}

pub fn decode(bytes: &[u8]) -> Result<CropFile> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic("not a BSC1 crop file".into()));
    }
    let mut r = Reader::new(&bytes[4..], "crops");
    let window = r.u32()? as usize;
    let stride = r.u32()? as usize;
    let count = r.u32()? as usize;
    if window == 0 {
        return Err(Error::Parse("crop window is zero".into()));
    }
    let px = window * window * 3;
    let mut crops = Vec::with_capacity(count.min(1 << 20));
    for k in 0..count {
        let label = CropLabel::from_class(r.u8()? as usize).map_err(|e| Error::Parse(format!("crop {k}: {e}")))?;
        let mut pixels = Vec::with_capacity(px);
        for _ in 0..px {
            pixels.push(r.f32()?);
        }
        crops.push(LabeledCrop { pixels: pixels.into(), window, label, origin: (0, k as u32, 0), light: 1.0 });
    }
    r.finish()?;
    Ok(CropFile { window, stride, crops })
}

pub fn save(crops: &[LabeledCrop], window: usize, stride: usize, path: &Path) -> Result<()> {
    write_atomic(path, &encode(crops, window, stride)?)
}

pub fn load(path: &Path) -> Result<CropFile> {
    decode(&read_bytes(path)?)
}
