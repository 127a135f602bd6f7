//! `DTEN` binary tensor container.
//!
//! ```text
//! "DTEN" | version u8 = 1 | dtype u8 (1 = f32, 2 = u8) | ndim u32 LE | dims u32 LE … | payload
//! ```
//!
//! The payload is row-major, little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DTEN";
pub const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::U8(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!("dims {dims:?} need {expected} elements, got {}", data.len())));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) || dims.len() > u32::MAX as usize {
            return Err(Error::InvalidInput("dimension exceeds u32".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn f32(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn u8(dims: Vec<usize>, values: Vec<u8>) -> Result<Self> {
        Self::new(dims, TensorData::U8(values))
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.data.dtype());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("tensor container: {m}"));
        if bytes.len() < 10 || &bytes[..4] != MAGIC {
            return Err(bad("missing DTEN header"));
        }
        if bytes[4] != VERSION {
            return Err(bad(&format!("unsupported version {}", bytes[4])));
        }
        let dtype = bytes[5];
        let u32_at = |at: usize| -> Result<usize> {
            let b = bytes.get(at..at + 4).ok_or_else(|| bad("truncated header"))?;
            Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
        };
        let ndim = u32_at(6)?;
        let dims = (0..ndim).map(|i| u32_at(10 + 4 * i)).collect::<Result<Vec<_>>>()?;
        let payload = &bytes[10 + 4 * ndim..];
        let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("dims overflow"))?;
        let data = match dtype {
            1 => {
                if payload.len() != count * 4 {
                    return Err(bad(&format!("payload is {} bytes, expected {}", payload.len(), count * 4)));
                }
                TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            2 => {
                if payload.len() != count {
                    return Err(bad(&format!("payload is {} bytes, expected {count}", payload.len())));
                }
                TensorData::U8(payload.to_vec())
            }
            other => return Err(bad(&format!("unknown dtype {other}"))),
        };
        Self::new(dims, data)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
