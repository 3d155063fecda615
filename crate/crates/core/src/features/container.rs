//! Binary feature container.
//!
//! Layout (all integers little-endian):
//!
//! | field        | type                                  |
//! |--------------|---------------------------------------|
//! | magic        | `b"SEDFEAT\0"`                        |
//! | version      | `u32` = 1                             |
//! | frame count  | `u32`                                 |
//! | block count  | `u32`                                 |
//! | blocks       | per block: `u32` name length, UTF-8 name, `u32` width |
//! | values       | `frames × width` `f32`, row-major     |

use std::io::Write;
use std::path::Path;

use crate::binio::{write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::features::layout::{FeatureLayout, FeatureMatrix, LayoutBlock};

pub const FEATURE_MAGIC: &[u8; 8] = b"SEDFEAT\0";
pub const FEATURE_VERSION: u32 = 1;

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(FEATURE_MAGIC);
    w.u32(FEATURE_VERSION);
    w.u32(m.frames() as u32);
    w.u32(m.layout().blocks().len() as u32);
    for block in m.layout().blocks() {
        w.str(&block.name);
        w.u32(block.width as u32);
    }
    for &v in m.values() {
        w.f32(v as f32);
    }
    w.finish()
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(FEATURE_MAGIC)?;
    r.expect_version(FEATURE_VERSION)?;
    let frames = r.u32()? as usize;
    let block_count = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(block_count.min(64));
    for _ in 0..block_count {
        let name = r.str()?;
        let width = r.u32()? as usize;
        blocks.push(LayoutBlock { name, width });
    }
    let layout = FeatureLayout::new(blocks);
    let count = frames
        .checked_mul(layout.width())
        .ok_or_else(|| Error::Container("matrix size overflows".into()))?;
    let values = (0..count)
        .map(|_| r.f32().map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    FeatureMatrix::new(values, frames, layout)
}

pub fn write_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_features(m))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

/// CSV with one header row naming each column `<block>[<i>]`.
pub fn write_features_csv(m: &FeatureMatrix, mut out: impl Write) -> std::io::Result<()> {
    let header: Vec<String> = m
        .layout()
        .blocks()
        .iter()
        .flat_map(|b| (0..b.width).map(move |i| format!("{}[{i}]", b.name)))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for t in 0..m.frames() {
        let row: Vec<String> = m.row(t).iter().map(|v| (*v as f32).to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
