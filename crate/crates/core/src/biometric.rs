//! Templates, fused references and the synthetic bimodal population.
//!
//! Every stored template is unit-norm, so the squared Euclidean distance
//! between two templates is `2 - 2 <u, v>` and the encrypted pipeline only
//! ever needs inner products.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default template length.
pub const DEFAULT_TEMPLATE_LEN: usize = 512;
/// Default synthetic population size.
pub const DEFAULT_SUBJECTS: usize = 533;
/// Per-coordinate intra-class noise for iris, from the EER calibration sweep.
pub const DEFAULT_IRIS_SIGMA: f64 = 0.0905;
/// Per-coordinate intra-class noise for fingerprint, from the EER calibration sweep.
pub const DEFAULT_FINGERPRINT_SIGMA: f64 = 0.0900;

/// Norm tolerance for a template to count as unit length.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("template is empty")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("no templates to concatenate")]
    NothingToConcatenate,
    #[error("template lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown modality {0:?}")]
    UnknownModality(String),
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
}

/// Biometric characteristic a template was extracted from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Iris,
    Fingerprint,
    Other(u8),
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Iris => 0,
            Modality::Fingerprint => 1,
            Modality::Other(i) => 2u8.saturating_add(i),
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            0 => Modality::Iris,
            1 => Modality::Fingerprint,
            c => Modality::Other(c - 2),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::Iris => f.write_str("iris"),
            Modality::Fingerprint => f.write_str("fingerprint"),
            Modality::Other(i) => write!(f, "other-{i}"),
        }
    }
}

impl FromStr for Modality {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iris" => Ok(Modality::Iris),
            "fingerprint" | "finger" => Ok(Modality::Fingerprint),
            other => other
                .strip_prefix("other-")
                .and_then(|i| i.parse().ok())
                .map(Modality::Other)
                .ok_or_else(|| TemplateError::UnknownModality(s.to_string())),
        }
    }
}

impl Serialize for Modality {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Modality {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A unit-norm feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    modality: Modality,
    values: Vec<f64>,
}

impl Template {
    /// Scales `values` to unit Euclidean norm.
    pub fn normalize(modality: Modality, values: &[f64]) -> Result<Self, TemplateError> {
        if values.is_empty() {
            return Err(TemplateError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TemplateError::NonFinite(i));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(TemplateError::ZeroVector);
        }
        Ok(Self {
            modality,
            values: values.iter().map(|v| v / norm).collect(),
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn inner_product(&self, other: &Template) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    /// Squared Euclidean distance, `2 - 2 <u, v>` for unit templates.
    pub fn dissimilarity(&self, other: &Template) -> f64 {
        2.0 - 2.0 * self.inner_product(other)
    }
}

/// Ordered concatenation of equal-length templates, packed block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedTemplate {
    parts: Vec<Template>,
}

impl FusedTemplate {
    pub fn concatenate(parts: Vec<Template>) -> Result<Self, TemplateError> {
        let first = parts.first().ok_or(TemplateError::NothingToConcatenate)?;
        let d = first.len();
        if let Some(p) = parts.iter().find(|p| p.len() != d) {
            return Err(TemplateError::LengthMismatch(d, p.len()));
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[Template] {
        &self.parts
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.parts.iter().map(Template::modality).collect()
    }

    pub fn template_len(&self) -> usize {
        self.parts[0].len()
    }

    pub fn len(&self) -> usize {
        self.parts.len() * self.template_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Block-ordered slot vector.
    pub fn vector(&self) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    /// Splits a packed slot vector back into templates. The values are taken
    /// as-is, without renormalization.
    pub fn unpack(slots: &[f64], modalities: &[Modality], template_len: usize) -> Result<Self, TemplateError> {
        if modalities.is_empty() {
            return Err(TemplateError::NothingToConcatenate);
        }
        let need = modalities.len() * template_len;
        if slots.len() < need || template_len == 0 {
            return Err(TemplateError::LengthMismatch(need, slots.len()));
        }
        let parts = modalities
            .iter()
            .zip(slots.chunks(template_len))
            .map(|(&modality, chunk)| Template {
                modality,
                values: chunk.to_vec(),
            })
            .collect();
        Ok(Self { parts })
    }
}

/// All captured samples of one subject. Every modality carries the same
/// number of samples; sample `i` of each modality forms capture session `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub samples: BTreeMap<Modality, Vec<Template>>,
}

impl SubjectRecord {
    pub fn sample(&self, modality: Modality, index: usize) -> Option<&Template> {
        self.samples.get(&modality).and_then(|s| s.get(index))
    }

    /// Number of capture sessions available for every modality.
    pub fn session_count(&self) -> usize {
        self.samples.values().map(Vec::len).min().unwrap_or(0)
    }

    /// The templates of capture session `index` in the requested order.
    pub fn session(&self, order: &[Modality], index: usize) -> Option<Vec<Template>> {
        order.iter().map(|&m| self.sample(m, index).cloned()).collect()
    }

    pub fn fused(&self, order: &[Modality], index: usize) -> Option<FusedTemplate> {
        FusedTemplate::concatenate(self.session(order, index)?).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityNoise {
    pub modality: Modality,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub template_len: usize,
    pub samples_min: usize,
    pub samples_max: usize,
    pub modalities: Vec<ModalityNoise>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_subjects: DEFAULT_SUBJECTS,
            template_len: DEFAULT_TEMPLATE_LEN,
            samples_min: 2,
            samples_max: 5,
            modalities: vec![
                ModalityNoise {
                    modality: Modality::Iris,
                    sigma: DEFAULT_IRIS_SIGMA,
                },
                ModalityNoise {
                    modality: Modality::Fingerprint,
                    sigma: DEFAULT_FINGERPRINT_SIGMA,
                },
            ],
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), TemplateError> {
        let bad = |m: &str| Err(TemplateError::InvalidConfig(m.into()));
        if self.n_subjects < 2 {
            return bad("need at least two subjects");
        }
        if self.template_len == 0 {
            return bad("template length must be positive");
        }
        if self.samples_min < 1 || self.samples_min > self.samples_max {
            return bad("sample range must satisfy 1 <= min <= max");
        }
        if self.modalities.is_empty() {
            return bad("no modalities");
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if !(m.sigma > 0.0 && m.sigma.is_finite()) {
                return bad(&format!("sigma for {} must be positive", m.modality));
            }
            if self.modalities[..i].iter().any(|o| o.modality == m.modality) {
                return bad(&format!("modality {} listed twice", m.modality));
            }
        }
        Ok(())
    }

    pub fn modality_order(&self) -> Vec<Modality> {
        self.modalities.iter().map(|m| m.modality).collect()
    }
}

fn gaussian_vector(rng: &mut ChaCha20Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Isotropic Gaussian-on-sphere population: each subject and modality gets
/// a uniformly random unit class center, and each sample is the normalized
/// center plus `sigma`-scaled Gaussian noise.
pub fn generate_synthetic_db(cfg: &SyntheticConfig) -> Result<Vec<SubjectRecord>, TemplateError> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let d = cfg.template_len;
    let width = cfg.n_subjects.to_string().len().max(4);
    let mut db = Vec::with_capacity(cfg.n_subjects);
    for subject in 0..cfg.n_subjects {
        let sessions = rng.random_range(cfg.samples_min..=cfg.samples_max);
        let mut samples = BTreeMap::new();
        for noise in &cfg.modalities {
            let center = Template::normalize(noise.modality, &gaussian_vector(&mut rng, d))
                .expect("gaussian draw is nonzero");
            let mut list = Vec::with_capacity(sessions);
            for _ in 0..sessions {
                let noisy: Vec<f64> = gaussian_vector(&mut rng, d)
                    .into_iter()
                    .zip(center.values())
                    .map(|(g, c)| c + noise.sigma * g)
                    .collect();
                list.push(Template::normalize(noise.modality, &noisy).expect("noisy sample is nonzero"));
            }
            samples.insert(noise.modality, list);
        }
        db.push(SubjectRecord {
            subject_id: format!("subject-{subject:0width$}"),
            samples,
        });
    }
    Ok(db)
}

/// Same-subject comparison between capture sessions `reference` and `probe`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MatedPair {
    pub subject: usize,
    pub reference: usize,
    pub probe: usize,
}

/// Cross-subject comparison of the first capture sessions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NonMatedPair {
    pub reference: usize,
    pub probe: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairLists {
    pub mated: Vec<MatedPair>,
    pub nonmated: Vec<NonMatedPair>,
}

/// Enumerates every unordered mated session pair per subject and every
/// unordered pair of distinct subjects.
pub fn mated_and_nonmated_pairs(db: &[SubjectRecord]) -> PairLists {
    let mut lists = PairLists::default();
    for (subject, rec) in db.iter().enumerate() {
        let s = rec.session_count();
        for reference in 0..s {
            for probe in reference + 1..s {
                lists.mated.push(MatedPair {
                    subject,
                    reference,
                    probe,
                });
            }
        }
    }
    for reference in 0..db.len() {
        for probe in reference + 1..db.len() {
            lists.nonmated.push(NonMatedPair { reference, probe });
        }
    }
    lists
}
