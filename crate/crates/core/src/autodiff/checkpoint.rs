//! Binary tensor archive used for checkpoints and feature exports.
//!
//! Layout (little-endian): magic `GIDS`, `u32` version, `u32` tensor count,
//! then per tensor `u32` name length, UTF-8 name, `u32` rows, `u32` cols and
//! `rows · cols` row-major `f32` values.

use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"GIDS";
pub const VERSION: u32 = 1;

pub fn encode_tensors<'a, T: Scalar + 'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(self.pos as u64, format!("truncated checkpoint while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_tensors<T: Scalar>(bytes: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic, expected GIDS"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::parse(at as u64, "tensor name is not UTF-8"))?
            .to_string();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("tensor '{name}' too large")))?;
        let raw = r.take(n.checked_mul(4).unwrap_or(usize::MAX), "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f32_exact(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        out.push((name, Tensor::new(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(r.pos as u64, "trailing bytes after last tensor"));
    }
    Ok(out)
}

pub fn save_tensors<'a, T: Scalar + 'a>(
    path: impl AsRef<Path>,
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
) -> Result<()> {
    write_atomic(path, &encode_tensors(tensors))
}

pub fn load_tensors<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<T>)>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes)
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, store: &ParamStore<T>) -> Result<()> {
    save_tensors(path, store.iter())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ParamStore<T>> {
    let mut store = ParamStore::new();
    for (name, t) in load_tensors(path)? {
        store.insert(name, t)?;
    }
    Ok(store)
}
