//! Accumulator files.
//!
//! ```text
//! magic        8 bytes  "COHMTRX\0"
//! version      u32      1
//! a, b         u64, u64
//! class extent u64      1 for the pairwise matrix
//! trials       u64
//! score        i64 * cells
//! pos, neg, zero  u64 * cells each
//! ```
//! All little-endian; cells in `(a, b, c)` row-major order.

use std::io::Write;
use std::path::Path;

use super::Counts;
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"COHMTRX\0";
pub const MATRIX_VERSION: u32 = 1;
const HEADER_BYTES: usize = 8 + 4 + 8 * 4;

pub fn encode_counts(c: &Counts) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + c.cells() * 32);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    for v in [c.a_len as u64, c.b_len as u64, c.classes as u64, c.trials] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &c.score {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for plane in [&c.pos, &c.neg, &c.zero] {
        for v in plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_counts(bytes: &[u8]) -> Result<Counts> {
    if bytes.len() < HEADER_BYTES || &bytes[..8] != MATRIX_MAGIC {
        return Err(Error::format("not a cohesion matrix file"));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(Error::format(format!("unsupported matrix version {version}")));
    }
    let (a, b, k, trials) = (u64_at(12), u64_at(20), u64_at(28), u64_at(36));
    if k == 0 {
        return Err(Error::format("class extent of zero"));
    }
    let cells = a
        .checked_mul(b)
        .and_then(|v| v.checked_mul(k))
        .filter(|&n| n.checked_mul(32).and_then(|p| p.checked_add(HEADER_BYTES as u64)) == Some(bytes.len() as u64))
        .ok_or_else(|| Error::format("matrix file size does not match its header"))? as usize;
    let plane = |i: usize| &bytes[HEADER_BYTES + i * cells * 8..HEADER_BYTES + (i + 1) * cells * 8];
    let words = |i: usize| {
        plane(i)
            .chunks_exact(8)
            .map(|w| u64::from_le_bytes(w.try_into().unwrap()))
    };
    let counts = Counts {
        a_len: a as usize,
        b_len: b as usize,
        classes: k as usize,
        trials,
        score: words(0).map(|w| w as i64).collect(),
        pos: words(1).collect(),
        neg: words(2).collect(),
        zero: words(3).collect(),
    };
    counts.check_invariants()?;
    Ok(counts)
}

pub fn write_counts(path: &Path, c: &Counts) -> Result<()> {
    std::fs::write(path, encode_counts(c)).map_err(|e| Error::io(path, e))
}

pub fn read_counts(path: &Path) -> Result<Counts> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_counts(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// One row per cell: `a_index,b_index[,class],score,pos,neg,zero,p_hat`,
/// with `p_hat` left empty where undefined.
pub fn write_csv(path: &Path, c: &Counts) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let per_class = c.classes > 1;
    let io = |e| Error::io(path, e);
    if per_class {
        writeln!(w, "a_index,b_index,class,score,pos,neg,zero,p_hat").map_err(io)?;
    } else {
        writeln!(w, "a_index,b_index,score,pos,neg,zero,p_hat").map_err(io)?;
    }
    for a in 0..c.a_len {
        for b in 0..c.b_len {
            for k in 0..c.classes {
                let i = c.index(a, b, k);
                let support = c.pos[i] + c.neg[i];
                let p_hat = if support > 0 {
                    format!("{:?}", c.pos[i] as f64 / support as f64)
                } else {
                    String::new()
                };
                if per_class {
                    write!(w, "{a},{b},{k},").map_err(io)?;
                } else {
                    write!(w, "{a},{b},").map_err(io)?;
                }
                writeln!(w, "{},{},{},{},{p_hat}", c.score[i], c.pos[i], c.neg[i], c.zero[i]).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}
