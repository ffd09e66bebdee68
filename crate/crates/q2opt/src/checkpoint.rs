//! Binary parameter snapshots: little-endian `spec_hash: u64`,
//! `version: u64`, `len: u64`, then `len` IEEE-754 `f64` values.

use std::path::Path;

use q2opt_core::approximator::{Network, ParamSnapshot};

use crate::{Error, Result};

const HEADER: usize = 24;

pub fn encode(snapshot: &ParamSnapshot) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * snapshot.len());
    out.extend_from_slice(&snapshot.spec_hash().to_le_bytes());
    out.extend_from_slice(&snapshot.version().to_le_bytes());
    out.extend_from_slice(&(snapshot.len() as u64).to_le_bytes());
    for v in snapshot.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ParamSnapshot, String> {
    if bytes.len() < HEADER {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
    let (hash, version, len) = (word(0), word(1), word(2));
    let body = &bytes[HEADER..];
    if body.len() as u64 != len.saturating_mul(8) {
        return Err(format!(
            "header declares {len} values but {} bytes follow",
            body.len()
        ));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ParamSnapshot::new(version, hash, values))
}

pub fn save(path: &Path, snapshot: &ParamSnapshot) -> Result<()> {
    std::fs::write(path, encode(snapshot)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamSnapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|message| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

/// Loads a snapshot and checks it against `network`'s layout.
pub fn load_for(path: &Path, network: &Network) -> Result<ParamSnapshot> {
    let snap = load(path)?;
    if snap.spec_hash() != network.spec_hash() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!(
                "spec hash {:016x} does not match the configured network {:016x}",
                snap.spec_hash(),
                network.spec_hash()
            ),
        });
    }
    if snap.len() != network.param_len() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!(
                "{} values, network needs {}",
                snap.len(),
                network.param_len()
            ),
        });
    }
    Ok(snap)
}
