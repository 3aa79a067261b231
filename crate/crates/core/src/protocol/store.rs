//! File-backed reference store.
//!
//! The file is an append-only log of records
//!
//! ```text
//! id_len u16 LE | id (UTF-8) | blob_len u64 LE | blob | crc32 u32 LE
//! ```
//!
//! where the checksum covers everything before it in the record. Later
//! records for the same subject replace earlier ones. On open, the log is
//! replayed up to the first incomplete or corrupt record and truncated
//! there, so an interrupted append never surfaces.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

const MAX_BLOB: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("subject {0:?} is already enrolled")]
    Duplicate(String),
    #[error("subject id must be 1..=65535 bytes")]
    InvalidId,
}

/// Encodes one log record.
pub fn encode_record(id: &str, blob: &[u8]) -> Vec<u8> {
    let mut rec = Vec::with_capacity(2 + id.len() + 8 + blob.len() + 4);
    rec.extend_from_slice(&(id.len() as u16).to_le_bytes());
    rec.extend_from_slice(id.as_bytes());
    rec.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    rec.extend_from_slice(blob);
    let crc = crc32fast::hash(&rec);
    rec.extend_from_slice(&crc.to_le_bytes());
    rec
}

/// Replays a log. Returns the surviving records and the length of the
/// valid prefix.
pub fn replay_log(data: &[u8]) -> (BTreeMap<String, Vec<u8>>, usize) {
    let mut map = BTreeMap::new();
    let mut pos = 0;
    while let Some((id, blob, next)) = parse_record(data, pos) {
        map.insert(id, blob);
        pos = next;
    }
    (map, pos)
}

fn parse_record(data: &[u8], start: usize) -> Option<(String, Vec<u8>, usize)> {
    let rest = data.get(start..)?;
    let id_len = u16::from_le_bytes(rest.get(..2)?.try_into().ok()?) as usize;
    let id_end = 2 + id_len;
    let id = std::str::from_utf8(rest.get(2..id_end)?).ok()?;
    let blob_len = u64::from_le_bytes(rest.get(id_end..id_end + 8)?.try_into().ok()?);
    if blob_len > MAX_BLOB || id_len == 0 {
        return None;
    }
    let blob_end = id_end + 8 + blob_len as usize;
    let blob = rest.get(id_end + 8..blob_end)?;
    let crc = u32::from_le_bytes(rest.get(blob_end..blob_end + 4)?.try_into().ok()?);
    if crc32fast::hash(&rest[..blob_end]) != crc {
        return None;
    }
    Some((id.to_string(), blob.to_vec(), start + blob_end + 4))
}

/// Subject id to serialized reference ciphertext. Blobs are opaque here.
#[derive(Debug)]
pub struct ReferenceStore {
    path: Option<PathBuf>,
    file: Option<File>,
    records: BTreeMap<String, Vec<u8>>,
}

impl ReferenceStore {
    /// A store without persistence.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            records: BTreeMap::new(),
        }
    }

    /// Opens or creates the log at `path`, dropping any torn tail.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let data = match fs::read(path) {
            Ok(d) => d,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (records, valid) = replay_log(&data);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if valid < data.len() {
            file.set_len(valid as u64)?;
            file.sync_all()?;
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Some(file),
            records,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, id: &str) -> Option<&[u8]> {
        self.records.get(id).map(Vec::as_slice)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    /// Stores `blob` for `id`. An existing record is only replaced when
    /// `replace` is set. The record is durable before the map changes.
    pub fn put(&mut self, id: &str, blob: Vec<u8>, replace: bool) -> Result<(), StoreError> {
        if id.is_empty() || id.len() > u16::MAX as usize {
            return Err(StoreError::InvalidId);
        }
        if !replace && self.records.contains_key(id) {
            return Err(StoreError::Duplicate(id.to_string()));
        }
        if let Some(file) = self.file.as_mut() {
            file.write_all(&encode_record(id, &blob))?;
            file.sync_data()?;
        }
        self.records.insert(id.to_string(), blob);
        Ok(())
    }

    /// Rewrites the log with one record per subject.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let Some(path) = self.path.clone() else {
            return Ok(());
        };
        let tmp = path.with_extension("compact.tmp");
        {
            let mut out = File::create(&tmp)?;
            for (id, blob) in &self.records {
                out.write_all(&encode_record(id, blob))?;
            }
            out.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        self.file = Some(OpenOptions::new().append(true).open(&path)?);
        Ok(())
    }
}
