//! Multi-modal biometric verification over CKKS-encrypted templates.
//!
//! References are packed as consecutive per-modality blocks in one
//! ciphertext. Verification runs as a cascade: the client computes an
//! encrypted cumulative inner product stage by stage, the server decrypts
//! only that score and stops as soon as a stage accepts.

pub mod bench;
pub mod biometric;
pub mod config;
pub mod dataset;
pub mod keystore;
pub mod matcher;
pub mod metrics;
pub mod protocol;

pub use hefuse_ckks as ckks;

pub use biometric::{
    generate_synthetic_db, mated_and_nonmated_pairs, FusedTemplate, Modality, PairLists, SubjectRecord,
    SyntheticConfig, Template, TemplateError,
};
pub use keystore::{ClientKeys, KeyCache, KeyError, ReferenceLayout, ServerKeys};
pub use matcher::{
    EncryptedMatcher, FusionMode, MatchError, MatchPolicy, PolicyKind, ProbeQueue, ProbeSource, StageDecision,
    StageResult, Verdict, VerificationOutcome,
};
