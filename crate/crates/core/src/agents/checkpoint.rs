//! Versioned binary snapshots.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, then the
//! MessagePack encoding of the value with named fields. Floats are stored
//! bit-exactly, so a reloaded run continues identically.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HRISCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(1 << 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    rmp_serde::encode::write_named(&mut out, value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(out)
}

pub fn decode<D: DeserializeOwned>(bytes: &[u8]) -> Result<D> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
        )));
    }
    rmp_serde::from_slice(&bytes[12..]).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let bytes = encode(value)?;
    std::fs::write(path, bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}
