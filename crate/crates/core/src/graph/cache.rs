//! Binary cache of a built similarity graph.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 8    | magic `PGFGRAPH`                       |
//! | 8      | 4    | version (u32)                          |
//! | 12     | 4    | storage mode (u32, 0 dense, 1 blocked) |
//! | 16     | 8    | block rows (u64)                       |
//! | 24     | 8    | n_items (u64)                          |
//! | 32     | 8    | alpha (f64)                            |
//! | 40     | 8    | s (f64)                                |
//! | 48     | 8    | rescale divisor (f64)                  |
//! | 56     | 32   | SHA-256 of the payload                 |
//! | 88     | 8n²  | row-major f64 payload                  |

use std::io::{Read, Write};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{RowBlocks, SimilarityGraph, Storage};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"PGFGRAPH";
pub const CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 88;

pub fn write_cache<W: Write>(graph: &SimilarityGraph, mut out: W) -> Result<()> {
    let n = graph.n_items();
    let mut payload = Vec::with_capacity(n * n * 8);
    for block in graph.values.blocks() {
        for v in block.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let (mode, block_rows) = match graph.storage {
        Storage::Dense => (0u32, n as u64),
        Storage::Blocked { block_rows } => (1u32, block_rows as u64),
    };
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(CACHE_MAGIC);
    header.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    header.extend_from_slice(&mode.to_le_bytes());
    header.extend_from_slice(&block_rows.to_le_bytes());
    header.extend_from_slice(&(n as u64).to_le_bytes());
    header.extend_from_slice(&graph.alpha.to_le_bytes());
    header.extend_from_slice(&graph.s.to_le_bytes());
    header.extend_from_slice(&graph.scale.to_le_bytes());
    header.extend_from_slice(&Sha256::digest(&payload));
    debug_assert_eq!(header.len(), HEADER_LEN);
    out.write_all(&header)?;
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

pub fn read_cache<R: Read>(mut input: R) -> Result<SimilarityGraph> {
    let mut header = [0u8; HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Cache("truncated header".into()))?;
    if &header[0..8] != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let block_rows = u64_at(16) as usize;
    let storage = match u32_at(12) {
        0 => Storage::Dense,
        1 => Storage::Blocked { block_rows },
        m => return Err(Error::Cache(format!("unknown storage mode {m}"))),
    };
    let n = u64_at(24) as usize;
    let (alpha, s, scale) = (f64_at(32), f64_at(40), f64_at(48));
    let expected = n
        .checked_mul(n)
        .and_then(|nn| nn.checked_mul(8))
        .ok_or_else(|| Error::Cache(format!("n_items {n} overflows")))?;
    let mut payload = Vec::with_capacity(expected);
    input.take(expected as u64 + 1).read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::Cache(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    if Sha256::digest(&payload).as_slice() != &header[56..88] {
        return Err(Error::Cache("checksum mismatch".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let dense = Array2::from_shape_vec((n, n), values).expect("length checked");
    Ok(SimilarityGraph {
        values: RowBlocks::from_dense(dense, storage)?,
        alpha,
        s,
        storage,
        scale,
    })
}
