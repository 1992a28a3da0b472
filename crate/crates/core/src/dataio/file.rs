//! `CSI1` dataset files.
//!
//! Layout (little-endian): magic `CSI1`, u32 version, u32 n_samples,
//! n_frames, n_subcarriers, n_tx, n_rx; then per sample the interleaved
//! (re, im) f32 payload in `[t][f][p][q]` order; then a u64 footer holding
//! the wrapping sum of all payload bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::channelgen::CsiTensor;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CSI1";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 * 6;

/// Wrapping sum of bytes.
pub fn checksum(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, &b| acc.wrapping_add(u64::from(b)))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Serializes samples; all must share one grid shape.
pub fn encode_dataset(samples: &[CsiTensor]) -> Result<Vec<u8>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("refusing to write an empty dataset".into()))?;
    let dims = first.dims();
    if let Some(odd) = samples.iter().find(|s| s.dims() != dims) {
        return Err(Error::shape("write_dataset", &dims, &odd.dims()));
    }
    let per_sample = dims.iter().product::<usize>() * 2 * 4;
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * per_sample + 8);
    out.extend_from_slice(&DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let n = u32::try_from(samples.len()).map_err(|_| Error::Config("too many samples".into()))?;
    out.extend_from_slice(&n.to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in samples {
        for c in s.data() {
            out.extend_from_slice(&(c.re as f32).to_le_bytes());
            out.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
    }
    let sum = checksum(&out[HEADER_LEN..]);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<CsiTensor>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(bytes, 4);
    if version != DATASET_VERSION {
        return Err(Error::Version {
            expected: DATASET_VERSION,
            found: version,
        });
    }
    let n = read_u32(bytes, 8) as usize;
    let dims = [0, 1, 2, 3].map(|i| read_u32(bytes, 12 + 4 * i) as usize);
    if n == 0 || dims.contains(&0) {
        return Err(Error::Format(format!("empty dataset header: n={n}, dims={dims:?}")));
    }
    let per_sample = dims.iter().product::<usize>();
    let payload_len = n * per_sample * 8;
    let expected = HEADER_LEN + payload_len + 8;
    if bytes.len() < expected {
        return Err(Error::Truncated(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after checksum footer",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + payload_len];
    let stored = u64::from_le_bytes(bytes[expected - 8..].try_into().expect("8-byte slice"));
    let computed = checksum(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    payload
        .chunks_exact(per_sample * 8)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(8)
                .map(|c| {
                    let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
                    let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
                    Complex64::new(f64::from(re), f64::from(im))
                })
                .collect();
            CsiTensor::new(dims, data)
        })
        .collect()
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Writes a dataset file and returns its checksum footer.
pub fn write_dataset(samples: &[CsiTensor], path: &Path) -> Result<u64> {
    let bytes = encode_dataset(samples)?;
    let sum = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8-byte slice"));
    write_atomic(path, &bytes)?;
    Ok(sum)
}

pub fn read_dataset(path: &Path) -> Result<Vec<CsiTensor>> {
    decode_dataset(&fs::read(path)?)
}
