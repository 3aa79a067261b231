//! On-disk synthetic dataset.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic "AFDS" | version u16 | template_len u32 | modality_count u8
//! modality codes [u8; modality_count] | subject_count u32
//! per subject: id_len u16 | id (UTF-8) | session_count u8
//!              then for each modality in header order, for each session:
//!              template_len x f32
//! ```
//!
//! Templates are renormalized to unit length on load. A JSON manifest with
//! the generator settings sits next to the data file.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biometric::{Modality, ModalityNoise, SubjectRecord, SyntheticConfig, Template, TemplateError};

pub const DATASET_MAGIC: &[u8; 4] = b"AFDS";
pub const DATASET_VERSION: u16 = 1;

const MAX_TEMPLATE_LEN: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    UnsupportedVersion(u16),
    #[error("dataset truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Decoded dataset contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub template_len: usize,
    pub modalities: Vec<Modality>,
    pub subjects: Vec<SubjectRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u16,
    pub subject_count: usize,
    pub template_len: usize,
    pub samples_min: usize,
    pub samples_max: usize,
    pub modalities: Vec<ModalityNoise>,
    pub seed: u64,
}

impl Manifest {
    pub fn from_config(cfg: &SyntheticConfig) -> Self {
        Self {
            format_version: DATASET_VERSION,
            subject_count: cfg.n_subjects,
            template_len: cfg.template_len,
            samples_min: cfg.samples_min,
            samples_max: cfg.samples_max,
            modalities: cfg.modalities.clone(),
            seed: cfg.seed,
        }
    }
}

pub fn encode_dataset(data: &Dataset) -> Result<Vec<u8>, DatasetError> {
    let invalid = |m: String| Err(DatasetError::Invalid(m));
    if data.modalities.is_empty() || data.modalities.len() > u8::MAX as usize {
        return invalid(format!("{} modalities", data.modalities.len()));
    }
    if data.template_len == 0 || data.template_len > MAX_TEMPLATE_LEN as usize {
        return invalid(format!("template length {}", data.template_len));
    }
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(data.template_len as u32).to_le_bytes());
    out.push(data.modalities.len() as u8);
    out.extend(data.modalities.iter().map(|m| m.code()));
    out.extend_from_slice(&(data.subjects.len() as u32).to_le_bytes());
    for rec in &data.subjects {
        let id = rec.subject_id.as_bytes();
        if id.len() > u16::MAX as usize {
            return invalid(format!("subject id of {} bytes", id.len()));
        }
        let sessions = rec.session_count();
        if sessions == 0 || sessions > u8::MAX as usize {
            return invalid(format!("{} has {sessions} sessions", rec.subject_id));
        }
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        out.push(sessions as u8);
        for &m in &data.modalities {
            for i in 0..sessions {
                let t = rec
                    .sample(m, i)
                    .ok_or_else(|| DatasetError::Invalid(format!("{} lacks {m}", rec.subject_id)))?;
                if t.len() != data.template_len {
                    return invalid(format!("{} {m} has length {}", rec.subject_id, t.len()));
                }
                for &v in t.values() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        match end {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DatasetError::Truncated(self.data.len())),
        }
    }

    fn u8(&mut self) -> Result<u8, DatasetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DatasetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, DatasetError> {
    let mut c = Cursor { data: bytes, pos: 0 };
    if c.take(4).map_err(|_| DatasetError::BadMagic)? != DATASET_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = c.u16()?;
    if version != DATASET_VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let template_len = c.u32()?;
    if template_len == 0 || template_len > MAX_TEMPLATE_LEN {
        return Err(DatasetError::Invalid(format!("template length {template_len}")));
    }
    let template_len = template_len as usize;
    let modality_count = c.u8()? as usize;
    if modality_count == 0 {
        return Err(DatasetError::Invalid("no modalities".into()));
    }
    let modalities: Vec<Modality> = c.take(modality_count)?.iter().map(|&b| Modality::from_code(b)).collect();
    for (i, m) in modalities.iter().enumerate() {
        if modalities[..i].contains(m) {
            return Err(DatasetError::Invalid(format!("modality {m} listed twice")));
        }
    }
    let subject_count = c.u32()? as usize;
    let mut subjects = Vec::new();
    for _ in 0..subject_count {
        let id_len = c.u16()? as usize;
        let subject_id = std::str::from_utf8(c.take(id_len)?)
            .map_err(|_| DatasetError::Invalid("subject id is not UTF-8".into()))?
            .to_string();
        let sessions = c.u8()? as usize;
        if sessions == 0 {
            return Err(DatasetError::Invalid(format!("{subject_id} has no sessions")));
        }
        let mut samples = BTreeMap::new();
        for &m in &modalities {
            let mut list = Vec::with_capacity(sessions);
            for _ in 0..sessions {
                let raw = c.take(template_len * 4)?;
                let values: Vec<f64> = raw
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                    .collect();
                list.push(Template::normalize(m, &values)?);
            }
            samples.insert(m, list);
        }
        subjects.push(SubjectRecord { subject_id, samples });
    }
    if c.pos != bytes.len() {
        return Err(DatasetError::Invalid(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(Dataset {
        template_len,
        modalities,
        subjects,
    })
}

/// Manifest path for a dataset file: `<file>.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn save(path: &Path, data: &Dataset, manifest: &Manifest) -> Result<(), DatasetError> {
    fs::write(path, encode_dataset(data)?)?;
    fs::write(manifest_path(path), serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
    decode_dataset(&fs::read(path)?)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    Ok(serde_json::from_slice(&fs::read(manifest_path(path))?)?)
}
