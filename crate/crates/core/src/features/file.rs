//! `SRF1` feature files and the JSON-lines sidecar that indexes a feature
//! directory.
//!
//! Layout (little-endian): `b"SRF1"`, `u8` version (1), `u8` kind code,
//! `u16` reserved (0), `u32` rows, `u32` cols, then `rows × cols` `f32`
//! values in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{FeatureImage, FeatureKind};

pub const MAGIC: &[u8; 4] = b"SRF1";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 16;
const MAX_ELEMENTS: u64 = 1 << 28;

/// One line of `manifest.jsonl` inside a feature directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub source: String,
    pub kind: FeatureKind,
    pub class_id: u32,
    pub category_id: u32,
    pub feature_file: String,
}

pub fn encode_feature(img: &FeatureImage) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * img.values.len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(img.kind.code());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(img.height as u32).to_le_bytes());
    buf.extend_from_slice(&(img.width as u32).to_le_bytes());
    for v in &img.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_feature(bytes: &[u8]) -> Result<FeatureImage> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "magic mismatch: expected {:?}, found {:?}",
            String::from_utf8_lossy(MAGIC),
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    let kind = FeatureKind::from_code(bytes[5]).ok_or_else(|| Error::Format(format!("unknown kind code {}", bytes[5])))?;
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (rows, cols) = (u32_at(8) as u64, u32_at(12) as u64);
    let count = rows * cols;
    if count == 0 || count > MAX_ELEMENTS {
        return Err(Error::Format(format!("dimension overflow: {rows} x {cols}")));
    }
    let expected = HEADER_LEN as u64 + 4 * count;
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "payload length {} does not match {rows} x {cols} (expected {expected})",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FeatureImage {
        kind,
        height: rows as usize,
        width: cols as usize,
        values,
    })
}

pub fn write_feature_file(img: &FeatureImage, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_feature(img))?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_feature(&bytes)
}
