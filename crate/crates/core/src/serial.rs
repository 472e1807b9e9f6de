//! Minimal little-endian byte reader shared by the sketch deserializers.

use crate::error::{Error, Result};

/// Cursor over a serialized byte buffer; every accessor checks bounds and
/// `finish` rejects trailing bytes.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, at: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Deserialize("truncated input".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn i128(&mut self) -> Result<i128> {
        Ok(i128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Deserialize("trailing bytes".into()));
        }
        Ok(())
    }
}

/// Appends a length-prefixed little-endian `u64` slice.
pub(crate) fn push_u64_slice(out: &mut Vec<u8>, vals: &[u64]) {
    out.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for &x in vals {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Appends a length-prefixed little-endian `u32` slice.
pub(crate) fn push_u32_slice(out: &mut Vec<u8>, vals: &[u32]) {
    out.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for &x in vals {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Reads a length-prefixed `u64` vector.
pub(crate) fn read_u64_vec(r: &mut Reader) -> Result<Vec<u64>> {
    let len = r.u64()? as usize;
    let mut vals = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        vals.push(r.u64()?);
    }
    Ok(vals)
}

/// Reads a length-prefixed `u32` vector.
pub(crate) fn read_u32_vec(r: &mut Reader) -> Result<Vec<u32>> {
    let len = r.u64()? as usize;
    let mut vals = Vec::with_capacity(len.min(1 << 25));
    for _ in 0..len {
        vals.push(r.u32()?);
    }
    Ok(vals)
}
