//! Named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "RELXCKPT"
//! version   u32      FORMAT_VERSION
//! precision u8       32 or 64 (bits per value)
//! meta_len  u64      followed by meta_len bytes of UTF-8 metadata
//! count     u32      followed by `count` tensor records:
//!   name_len u32, name bytes, ndim u32, ndim × u64 extents,
//!   product(extents) raw values of `precision` bits
//! ```

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"RELXCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container<T> {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Container<T> {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(T::BITS);
        out.extend_from_slice(&(self.metadata.len() as u64).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header = read_header(&mut r)?;
        if header.precision != T::BITS {
            return Err(Error::CheckpointFormat(format!(
                "stored precision is {} bits, requested {}",
                header.precision,
                T::BITS
            )));
        }
        let meta_len = r.u64()? as usize;
        let metadata = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| Error::CheckpointFormat("metadata is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let width = (T::BITS / 8) as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::CheckpointFormat("tensor name is not UTF-8".into()))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(
                numel
                    .checked_mul(width)
                    .ok_or_else(|| Error::CheckpointFormat(format!("tensor `{name}` is too large")))?,
            )?;
            let data = raw.chunks_exact(width).map(T::read_le).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::CheckpointFormat("trailing bytes".into()));
        }
        Ok(Self { metadata, tensors })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub precision: u8,
}

/// Reads only the fixed header, to pick the precision before decoding.
pub fn peek_header(bytes: &[u8]) -> Result<Header> {
    read_header(&mut Reader { bytes, pos: 0 })
}

fn read_header(r: &mut Reader<'_>) -> Result<Header> {
    if r.take(8)? != MAGIC {
        return Err(Error::CheckpointFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointFormat(format!("unsupported version {version}")));
    }
    let precision = r.take(1)?[0];
    if precision != 32 && precision != 64 {
        return Err(Error::CheckpointFormat(format!(
            "unsupported precision {precision}"
        )));
    }
    Ok(Header { version, precision })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CheckpointFormat("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
