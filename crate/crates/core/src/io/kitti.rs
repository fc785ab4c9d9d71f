//! SemanticKITTI-style raw binaries: `.bin` scans and `.labels` files.

use std::fs;
use std::path::Path;

use super::{write_atomic, PointCloud, NUM_ATTRS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const RECORD_BYTES: usize = 4 * NUM_ATTRS;

pub fn decode_kitti_bin<T: Scalar>(bytes: &[u8]) -> Result<PointCloud<T>> {
    if bytes.is_empty() {
        return Err(Error::parse(0, "zero points"));
    }
    if bytes.len() % RECORD_BYTES != 0 {
        let offset = (bytes.len() / RECORD_BYTES * RECORD_BYTES) as u64;
        return Err(Error::parse(
            offset,
            format!("truncated record ({} trailing bytes)", bytes.len() % RECORD_BYTES),
        ));
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    for (r, rec) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        let mut p = [T::zero(); NUM_ATTRS];
        for (a, chunk) in rec.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::parse((r * RECORD_BYTES + a * 4) as u64, "non-finite value"));
            }
            p[a] = T::from_f32_exact(v);
        }
        points.push(p);
    }
    PointCloud::new(points)
}

pub fn encode_kitti_bin<T: Scalar>(cloud: &PointCloud<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in cloud.points() {
        for v in p {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(
            (bytes.len() / 4 * 4) as u64,
            "truncated label record",
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_labels(labels: &[u32]) -> Vec<u8> {
    labels.iter().flat_map(|l| l.to_le_bytes()).collect()
}

/// Reads a `.labels` file. Range checks happen when attached to a cloud.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u32]) -> Result<()> {
    write_atomic(path, &encode_labels(labels))
}
