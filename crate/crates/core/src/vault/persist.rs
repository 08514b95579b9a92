//! Single-file vault snapshots.
//!
//! Layout (little-endian):
//!
//! ```text
//! "NBVS"  u16 format  u64 payload_len  [u8; 32] sha256(payload)  payload
//! ```
//!
//! `payload` is the JSON-serialized [`VaultState`]. A write goes to
//! `<path>.tmp`, is fsynced, the current file (if any) is renamed to
//! `<path>.prev`, and the temp file is renamed over `<path>`. A crash at any
//! point leaves either the old or the new snapshot readable.

use std::fs::{self, File};
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::vault::embed::EmbeddingRecord;
use crate::vault::store::{Vault, VaultState};

const MAGIC: &[u8; 4] = b"NBVS";
const FORMAT: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 32;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a vault snapshot")]
    BadMagic,
    #[error("unsupported snapshot format {0}")]
    UnsupportedFormat(u16),
    #[error("snapshot is incomplete: expected {expected} payload bytes, found {found}")]
    PartialWrite { expected: u64, found: u64 },
    #[error("snapshot checksum mismatch")]
    ChecksumError,
    #[error("snapshot payload: {0}")]
    Payload(String),
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn previous_path(path: &Path) -> PathBuf {
    sibling(path, ".prev")
}

pub fn encode_snapshot(state: &VaultState) -> Vec<u8> {
    let payload = serde_json::to_vec(state).expect("vault state serializes");
    let digest = Sha256::digest(&payload);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.write_u16::<LittleEndian>(FORMAT).unwrap();
    out.write_u64::<LittleEndian>(payload.len() as u64).unwrap();
    out.extend_from_slice(&digest);
    out.extend_from_slice(&payload);
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<VaultState, PersistError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(PersistError::BadMagic);
        }
        return Err(PersistError::PartialWrite {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let mut cur = &bytes[4..];
    let format = cur.read_u16::<LittleEndian>()?;
    if format != FORMAT {
        return Err(PersistError::UnsupportedFormat(format));
    }
    let len = cur.read_u64::<LittleEndian>()?;
    let mut digest = [0u8; 32];
    cur.read_exact(&mut digest)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != len {
        return Err(PersistError::PartialWrite {
            expected: len,
            found: payload.len() as u64,
        });
    }
    if Sha256::digest(payload).as_slice() != digest {
        return Err(PersistError::ChecksumError);
    }
    serde_json::from_slice(payload).map_err(|e| PersistError::Payload(e.to_string()))
}

/// Crash-safe write of the vault's current snapshot.
pub fn persist(vault: &Vault, path: &Path) -> Result<u64, PersistError> {
    let snapshot = vault.snapshot();
    let bytes = encode_snapshot(&snapshot);
    let tmp = sibling(path, ".tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    if path.exists() {
        fs::rename(path, previous_path(path))?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        // Directory fsync makes the renames durable; not supported everywhere.
        let _ = File::open(dir).and_then(|d| d.sync_all());
    }
    Ok(snapshot.version)
}

pub fn load(path: &Path) -> Result<Vault, PersistError> {
    let bytes = fs::read(path)?;
    Ok(Vault::from_state(decode_snapshot(&bytes)?))
}

/// Load `path`, falling back to the retained previous snapshot. The error of
/// the primary file is returned alongside a successful fallback.
pub fn load_with_fallback(path: &Path) -> Result<(Vault, Option<PersistError>), PersistError> {
    match load(path) {
        Ok(v) => Ok((v, None)),
        Err(primary) => {
            let prev = previous_path(path);
            if prev.exists() {
                Ok((load(&prev)?, Some(primary)))
            } else {
                Err(primary)
            }
        }
    }
}

pub fn export_embeddings<W: Write>(vault: &Vault, mut out: W) -> std::io::Result<usize> {
    let snap = vault.snapshot();
    for e in snap.embeddings.values() {
        serde_json::to_writer(&mut out, e.as_ref())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(snap.embeddings.len())
}

pub fn read_embeddings<R: BufRead>(input: R) -> Result<Vec<EmbeddingRecord>, PersistError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PersistError::Payload(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
