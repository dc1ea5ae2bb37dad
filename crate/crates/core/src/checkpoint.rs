//! Parameter snapshots and their on-disk encoding.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "COHCKPT\0"
//! version      u32      1
//! flags        u32      bit 0: velocity block present
//! spec hash    32 bytes SHA-256 of the model spec
//! step         u64
//! entries      u32
//!   name_len   u32, name bytes (UTF-8)
//!   ndim       u32, dims u64 * ndim
//!   offset     u64
//! count        u64
//! values       f64 * count
//! velocity     f64 * count   (when flagged)
//! ```

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{LayoutEntry, ModelSpec, ParamVector};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"COHCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const FLAG_VELOCITY: u32 = 1;

/// Parameters θ after `step` training steps, optionally with the optimizer
/// velocity needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: ParamVector,
    pub velocity: Option<ParamVector>,
}

impl Checkpoint {
    pub fn encode(&self, spec: &ModelSpec) -> Vec<u8> {
        let layout = self.params.layout();
        let mut out = Vec::with_capacity(64 + self.params.len() * 16);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let flags = if self.velocity.is_some() { FLAG_VELOCITY } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&spec.hash());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(layout.len() as u32).to_le_bytes());
        for e in layout.iter() {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(e.offset as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(vel) = &self.velocity {
            for v in vel.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a checkpoint and checks it was written for `spec`.
    pub fn decode(bytes: &[u8], spec: &ModelSpec) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::format("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let flags = r.u32()?;
        if r.take(32)? != spec.hash() {
            return Err(Error::format("checkpoint was written for a different model spec"));
        }
        let step = r.u64()?;
        let entries = r.u32()? as usize;
        let mut layout = Vec::with_capacity(entries);
        for _ in 0..entries {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format("layout name is not UTF-8"))?
                .to_string();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let offset = r.u64()? as usize;
            layout.push(LayoutEntry { name, shape, offset });
        }
        if layout != spec.layout() {
            return Err(Error::format("checkpoint layout does not match the model spec"));
        }
        let layout: Arc<[LayoutEntry]> = layout.into();
        let count = r.u64()? as usize;
        let params = ParamVector::new(r.f64s(count)?, layout.clone())?;
        let velocity = if flags & FLAG_VELOCITY != 0 {
            Some(ParamVector::new(r.f64s(count)?, layout)?)
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { step, params, velocity })
    }

    pub fn write(&self, path: &Path, spec: &ModelSpec) -> Result<()> {
        std::fs::write(path, self.encode(spec)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, spec: &ModelSpec) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, spec).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
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
            .ok_or_else(|| Error::format("checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::format("bad count"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
