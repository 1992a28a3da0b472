//! `CKPT` checkpoint files.
//!
//! Layout (little-endian): magic `CKPT`, u32 version, then the payload:
//! u32 length + canonical JSON of the [`ModelConfig`], u32 array count, and
//! per array u32 rank, u32 extents, f32 data in declaration order. A u64
//! footer holds the wrapping byte sum of the payload.

use std::fs;
use std::path::Path;

use crate::dataio::{checksum, write_atomic};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{ModelConfig, ModelParams};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(&params.config)?;
    let mut out = Vec::with_capacity(16 + json.len() + params.num_params() * 4);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = checksum(&out[8..]);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("checkpoint ends before byte {}", self.at + n)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>> {
    if bytes.len() < 16 {
        return Err(Error::Truncated(format!("{} bytes is too short for a checkpoint", bytes.len())));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let split = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[split..].try_into().expect("8 bytes"));
    let computed = checksum(&bytes[8..split]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader {
        bytes: &bytes[..split],
        at: 8,
    };
    let json_len = r.u32()?;
    let config: ModelConfig = serde_json::from_slice(r.take(json_len)?)?;
    let n = r.u32()?;
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let data = r
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(Tensor::new(&shape, data)?);
    }
    if r.at != split {
        return Err(Error::Format(format!("{} unread bytes before the footer", split - r.at)));
    }
    ModelParams::from_tensors(config, tensors)
}

/// Atomically writes a checkpoint (temp file, then rename).
pub fn save_checkpoint(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params)?)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    decode_checkpoint(&fs::read(path)?)
}
