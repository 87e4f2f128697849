//! Flat binary container of named `f64` arrays.
//!
//! Layout: the 8-byte magic `HRMCKPT1`, a little-endian `u64` header length,
//! a JSON header listing `{name, shape, offset, len}` per array (offsets in
//! bytes from the start of the payload), then the payload of little-endian
//! `f64` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HRMCKPT1";

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

pub fn save_checkpoint(path: &Path, arrays: &[(String, Tensor)]) -> Result<()> {
    let mut entries = Vec::with_capacity(arrays.len());
    let mut payload = Vec::new();
    for (name, t) in arrays {
        entries.push(Entry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: payload.len() as u64,
            len: t.len() as u64,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&entries).map_err(|e| Error::structural(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fmt = |offset: usize, detail: &str| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        detail: detail.to_string(),
    };
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fmt(0, "bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(hlen)
        .filter(|end| *end <= bytes.len())
        .ok_or_else(|| fmt(8, "header length exceeds file"))?;
    let entries: Vec<Entry> =
        serde_json::from_slice(&bytes[16..body]).map_err(|e| fmt(16, &e.to_string()))?;
    let payload = &bytes[body..];
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let start = e.offset as usize;
        let end = start
            .checked_add(e.len as usize * 8)
            .filter(|end| *end <= payload.len())
            .ok_or_else(|| {
                fmt(
                    body + start,
                    &format!("array {} runs past end of file", e.name),
                )
            })?;
        let data = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(e.shape, data).map_err(|err| fmt(body + start, &err.to_string()))?;
        out.push((e.name, t));
    }
    Ok(out)
}
