//! Cascaded decision-level fusion over an encrypted packed reference.
//!
//! The reference is enrolled once as a single ciphertext holding every
//! modality block back to back. A sequential verification acquires one probe
//! per stage, aligns the matching reference block to slots `[0, d)` by a slot
//! rotation, and adds the stage inner product to a running encrypted score.
//! The key holder decrypts that score and turns it into a binary stage
//! decision; later probes are only requested after a non-accepting stage.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use hefuse_ckks::linops::{accumulate_score, inner_product, realign, rotate_and_sum};
use hefuse_ckks::{
    Ciphertext, CkksError, EvaluationKeys, Evaluator, OpCounts, PackedLayout, PublicKey, SecretKey,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biometric::{FusedTemplate, Modality, Template, TemplateError};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("policy mode {0:?} cannot run this verification")]
    WrongMode(FusionMode),
    #[error("no probe available for stage {stage} ({modality})")]
    ProbesExhausted { stage: usize, modality: Modality },
    #[error("modality {0} is not part of the enrolled reference")]
    NotEnrolled(Modality),
    #[error("expected a {expected} probe, got {got}")]
    ModalityMismatch { expected: Modality, got: Modality },
    #[error("probe has {got} modalities, reference has {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("probe length {got} differs from template length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("score judge failed: {0}")]
    Judge(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    SequentialOr,
    UnconditionalAnd,
}

/// Modality order, per-stage dissimilarity thresholds and fusion mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub name: String,
    pub modality_order: Vec<Modality>,
    pub thresholds: Vec<f64>,
    pub mode: FusionMode,
}

impl MatchPolicy {
    pub fn sequential(name: &str, order: Vec<Modality>, thresholds: Vec<f64>) -> Result<Self, MatchError> {
        let p = Self {
            name: name.to_string(),
            modality_order: order,
            thresholds,
            mode: FusionMode::SequentialOr,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn unconditional(name: &str, order: Vec<Modality>, threshold: f64) -> Result<Self, MatchError> {
        let p = Self {
            name: name.to_string(),
            modality_order: order,
            thresholds: vec![threshold],
            mode: FusionMode::UnconditionalAnd,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: String| Err(MatchError::InvalidPolicy(m));
        if self.modality_order.is_empty() {
            return bad("empty modality order".into());
        }
        for (i, m) in self.modality_order.iter().enumerate() {
            if self.modality_order[..i].contains(m) {
                return bad(format!("{m} appears twice"));
            }
        }
        let expected = match self.mode {
            FusionMode::SequentialOr => self.modality_order.len(),
            FusionMode::UnconditionalAnd => 1,
        };
        if self.thresholds.len() != expected {
            return bad(format!("{} thresholds, expected {expected}", self.thresholds.len()));
        }
        if self.thresholds.iter().any(|t| t.is_nan()) {
            return bad("NaN threshold".into());
        }
        Ok(())
    }

    pub fn modality_count(&self) -> usize {
        self.modality_order.len()
    }

    /// Number of decision stages.
    pub fn stage_count(&self) -> usize {
        match self.mode {
            FusionMode::SequentialOr => self.modality_order.len(),
            FusionMode::UnconditionalAnd => 1,
        }
    }

    /// Threshold of 1-based `stage`.
    pub fn threshold(&self, stage: usize) -> f64 {
        self.thresholds[stage - 1]
    }

    /// Number of unit blocks summed into the score at `stage`.
    pub fn blocks_at_stage(&self, stage: usize) -> usize {
        match self.mode {
            FusionMode::SequentialOr => stage,
            FusionMode::UnconditionalAnd => self.modality_order.len(),
        }
    }

    /// Decision for a decrypted cumulative inner product at `stage`.
    pub fn decide(&self, stage: usize, cumulative_ip: f64) -> StageResult {
        let dissimilarity = dissimilarity_from_ip(cumulative_ip, self.blocks_at_stage(stage));
        StageResult {
            stage,
            cumulative_ip: Some(cumulative_ip),
            dissimilarity: Some(dissimilarity),
            decision: stage_decision(dissimilarity, self.threshold(stage), stage, self.stage_count()),
        }
    }
}

/// Named policies for two modalities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Sequential OR, iris first.
    AmbFhe1,
    /// Sequential OR, fingerprint first.
    AmbFhe2,
    /// Both modalities, one fused comparison.
    MultiAnd,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::MultiAnd, PolicyKind::AmbFhe1, PolicyKind::AmbFhe2];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::AmbFhe1 => "amb-fhe-1",
            PolicyKind::AmbFhe2 => "amb-fhe-2",
            PolicyKind::MultiAnd => "multi-and",
        }
    }

    pub fn order(self) -> Vec<Modality> {
        match self {
            PolicyKind::AmbFhe1 | PolicyKind::MultiAnd => vec![Modality::Iris, Modality::Fingerprint],
            PolicyKind::AmbFhe2 => vec![Modality::Fingerprint, Modality::Iris],
        }
    }

    pub fn mode(self) -> FusionMode {
        match self {
            PolicyKind::MultiAnd => FusionMode::UnconditionalAnd,
            _ => FusionMode::SequentialOr,
        }
    }

    pub fn with_thresholds(self, thresholds: Vec<f64>) -> Result<MatchPolicy, MatchError> {
        let p = MatchPolicy {
            name: self.name().to_string(),
            modality_order: self.order(),
            thresholds,
            mode: self.mode(),
        };
        p.validate()?;
        Ok(p)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "amb-fhe-1" => Ok(PolicyKind::AmbFhe1),
            "amb-fhe-2" => Ok(PolicyKind::AmbFhe2),
            "multi-and" | "multi" => Ok(PolicyKind::MultiAnd),
            _ => Err(MatchError::InvalidPolicy(format!("unknown policy {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageDecision {
    Accept,
    Continue,
    Reject,
}

/// Final binary outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// One stage as seen by whoever evaluated it. Only the key holder knows the
/// score; other roles see the decision alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: usize,
    pub cumulative_ip: Option<f64>,
    pub dissimilarity: Option<f64>,
    pub decision: StageDecision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationOutcome {
    pub verdict: Verdict,
    pub stages_used: usize,
    pub stages: Vec<StageResult>,
    pub probes_acquired: usize,
    pub op_counts: OpCounts,
}

/// Squared Euclidean distance of `blocks` unit-norm template pairs whose
/// inner products sum to `cumulative_ip`.
pub fn dissimilarity_from_ip(cumulative_ip: f64, blocks: usize) -> f64 {
    2.0 * blocks as f64 - 2.0 * cumulative_ip
}

/// Strict acceptance: ties reject.
pub fn stage_decision(dissimilarity: f64, threshold: f64, stage: usize, stage_count: usize) -> StageDecision {
    if dissimilarity < threshold {
        StageDecision::Accept
    } else if stage < stage_count {
        StageDecision::Continue
    } else {
        StageDecision::Reject
    }
}

/// Cumulative inner products of reference and probe blocks in order.
pub fn cumulative_ips(reference: &[Template], probe: &[Template]) -> Vec<f64> {
    reference
        .iter()
        .zip(probe)
        .scan(0.0, |acc, (r, p)| {
            *acc += r.inner_product(p);
            Some(*acc)
        })
        .collect()
}

/// Plaintext cascade over templates already arranged in policy order.
pub fn plain_cascade(reference: &[Template], probe: &[Template], policy: &MatchPolicy) -> (Verdict, Vec<StageResult>) {
    let ips = cumulative_ips(reference, probe);
    match policy.mode {
        FusionMode::UnconditionalAnd => {
            let r = policy.decide(1, *ips.last().unwrap_or(&0.0));
            let v = if r.decision == StageDecision::Accept {
                Verdict::Accept
            } else {
                Verdict::Reject
            };
            (v, vec![r])
        }
        FusionMode::SequentialOr => {
            let mut stages = Vec::new();
            for (j, &s) in ips.iter().enumerate().take(policy.stage_count()) {
                let r = policy.decide(j + 1, s);
                let accepted = r.decision == StageDecision::Accept;
                stages.push(r);
                if accepted {
                    return (Verdict::Accept, stages);
                }
            }
            (Verdict::Reject, stages)
        }
    }
}

/// Supplies probe templates on demand, one per stage.
pub trait ProbeSource {
    fn acquire(&mut self, stage: usize, modality: Modality) -> Result<Template, MatchError>;
}

/// Probe source backed by a queue of captured templates.
#[derive(Clone, Debug, Default)]
pub struct ProbeQueue {
    pending: VecDeque<Template>,
    acquired: usize,
}

impl ProbeQueue {
    pub fn new(probes: impl IntoIterator<Item = Template>) -> Self {
        Self {
            pending: probes.into_iter().collect(),
            acquired: 0,
        }
    }

    pub fn acquired(&self) -> usize {
        self.acquired
    }
}

impl ProbeSource for ProbeQueue {
    fn acquire(&mut self, stage: usize, modality: Modality) -> Result<Template, MatchError> {
        let t = self
            .pending
            .pop_front()
            .ok_or(MatchError::ProbesExhausted { stage, modality })?;
        if t.modality() != modality {
            return Err(MatchError::ModalityMismatch {
                expected: modality,
                got: t.modality(),
            });
        }
        self.acquired += 1;
        Ok(t)
    }
}

/// Turns an encrypted cumulative score into a stage decision.
pub trait ScoreJudge {
    fn judge(&mut self, stage: usize, score: &Ciphertext) -> Result<StageResult, MatchError>;
}

/// Decrypts slot 0 and applies the policy threshold.
pub fn judge_score(
    ev: &Evaluator,
    sk: &SecretKey,
    policy: &MatchPolicy,
    stage: usize,
    score: &Ciphertext,
) -> Result<StageResult, MatchError> {
    if stage == 0 || stage > policy.stage_count() {
        return Err(MatchError::InvalidPolicy(format!("stage {stage} outside policy")));
    }
    let slots = ev.decrypt_values(sk, score)?;
    Ok(policy.decide(stage, slots[0]))
}

/// Judge role holding the secret key.
pub struct KeyHolder<'a> {
    pub evaluator: &'a Evaluator,
    pub secret_key: &'a SecretKey,
    pub policy: &'a MatchPolicy,
}

impl ScoreJudge for KeyHolder<'_> {
    fn judge(&mut self, stage: usize, score: &Ciphertext) -> Result<StageResult, MatchError> {
        judge_score(self.evaluator, self.secret_key, self.policy, stage, score)
    }
}

/// Client-side engine: everything that happens on ciphertexts.
pub struct EncryptedMatcher<'a> {
    ev: &'a Evaluator,
    pk: &'a PublicKey,
    evk: &'a EvaluationKeys,
    layout: PackedLayout,
    enrolled: Vec<Modality>,
    plaintext_probes: bool,
}

impl<'a> EncryptedMatcher<'a> {
    /// `enrolled` is the fixed block order of every reference ciphertext.
    pub fn new(
        ev: &'a Evaluator,
        pk: &'a PublicKey,
        evk: &'a EvaluationKeys,
        enrolled: Vec<Modality>,
        template_len: usize,
    ) -> Result<Self, MatchError> {
        let layout = PackedLayout::new(template_len, enrolled.len(), ev.context().slot_count())?;
        for (i, m) in enrolled.iter().enumerate() {
            if enrolled[..i].contains(m) {
                return Err(MatchError::InvalidPolicy(format!("{m} enrolled twice")));
            }
        }
        Ok(Self {
            ev,
            pk,
            evk,
            layout,
            enrolled,
            plaintext_probes: false,
        })
    }

    /// Multiplies by unencrypted probes instead of encrypting them. Only for
    /// benchmarking.
    pub fn with_plaintext_probes(mut self, enabled: bool) -> Self {
        self.plaintext_probes = enabled;
        self
    }

    pub fn layout(&self) -> &PackedLayout {
        &self.layout
    }

    pub fn enrolled(&self) -> &[Modality] {
        &self.enrolled
    }

    pub fn evaluator(&self) -> &Evaluator {
        self.ev
    }

    /// 1-based block index of `modality` in the reference.
    pub fn block_of(&self, modality: Modality) -> Result<usize, MatchError> {
        self.enrolled
            .iter()
            .position(|&m| m == modality)
            .map(|i| i + 1)
            .ok_or(MatchError::NotEnrolled(modality))
    }

    /// Rearranges fused parts into enrollment order.
    fn enrolled_vector(&self, fused: &FusedTemplate) -> Result<Vec<f64>, MatchError> {
        if fused.parts().len() != self.enrolled.len() {
            return Err(MatchError::ArityMismatch {
                expected: self.enrolled.len(),
                got: fused.parts().len(),
            });
        }
        if fused.template_len() != self.layout.template_len() {
            return Err(MatchError::LengthMismatch {
                expected: self.layout.template_len(),
                got: fused.template_len(),
            });
        }
        let mut out = Vec::with_capacity(self.layout.template_len() * self.enrolled.len());
        for &m in &self.enrolled {
            let part = fused
                .parts()
                .iter()
                .find(|p| p.modality() == m)
                .ok_or(MatchError::ModalityMismatch {
                    expected: m,
                    got: fused.parts()[0].modality(),
                })?;
            out.extend_from_slice(part.values());
        }
        Ok(out)
    }

    /// Encrypts a fused reference in enrollment block order.
    pub fn encrypt_reference<R: Rng + ?Sized>(&self, fused: &FusedTemplate, rng: &mut R) -> Result<Ciphertext, MatchError> {
        let v = self.enrolled_vector(fused)?;
        Ok(self.ev.encrypt_values(self.pk, &v, rng)?)
    }

    pub fn start(&self, reference: &Ciphertext) -> Result<Cascade, MatchError> {
        self.ev.context().validate_ciphertext(reference)?;
        Ok(Cascade {
            aligned: reference.clone(),
            aligned_block: 1,
            score: None,
            stage: 0,
        })
    }

    fn probe_inner_product<R: Rng + ?Sized>(
        &self,
        reference: &Ciphertext,
        probe: &[f64],
        rng: &mut R,
    ) -> Result<Ciphertext, MatchError> {
        let ip = if self.plaintext_probes {
            let pt = self.ev.encode(probe, self.ev.context().params().scale, reference.level())?;
            let product = self.ev.mul_plain(reference, &pt)?;
            rotate_and_sum(self.ev, &product, self.evk)?
        } else {
            let ct = self.ev.encrypt_values(self.pk, probe, rng)?;
            let ct = self.ev.drop_to_level(&ct, reference.level())?;
            inner_product(self.ev, reference, &ct, self.evk)?
        };
        Ok(ip)
    }

    /// Encrypted inner product of the whole reference with a fused probe.
    pub fn fused_score<R: Rng + ?Sized>(
        &self,
        reference: &Ciphertext,
        probe: &FusedTemplate,
        rng: &mut R,
    ) -> Result<Ciphertext, MatchError> {
        self.ev.context().validate_ciphertext(reference)?;
        let v = self.enrolled_vector(probe)?;
        self.probe_inner_product(reference, &v, rng)
    }

    /// Sequential OR verification with lazily acquired probes.
    pub fn verify_incremental<R: Rng + ?Sized>(
        &self,
        reference: &Ciphertext,
        probes: &mut dyn ProbeSource,
        policy: &MatchPolicy,
        judge: &mut dyn ScoreJudge,
        rng: &mut R,
    ) -> Result<VerificationOutcome, MatchError> {
        policy.validate()?;
        if policy.mode != FusionMode::SequentialOr {
            return Err(MatchError::WrongMode(policy.mode));
        }
        for &m in &policy.modality_order {
            self.block_of(m)?;
        }
        let before = self.ev.counts();
        let mut cascade = self.start(reference)?;
        let mut stages = Vec::new();
        let mut verdict = Verdict::Reject;
        for (j, &modality) in policy.modality_order.iter().enumerate() {
            let stage = j + 1;
            let probe = probes.acquire(stage, modality)?;
            let score = cascade.advance(self, &probe, rng)?;
            let result = judge.judge(stage, &score)?;
            let decision = result.decision;
            stages.push(result);
            if decision == StageDecision::Accept {
                verdict = Verdict::Accept;
                break;
            }
        }
        Ok(VerificationOutcome {
            verdict,
            stages_used: stages.len(),
            probes_acquired: stages.len(),
            stages,
            op_counts: self.ev.counts() - before,
        })
    }

    /// One fused comparison over every block.
    pub fn verify_unconditional<R: Rng + ?Sized>(
        &self,
        reference: &Ciphertext,
        probe: &FusedTemplate,
        policy: &MatchPolicy,
        judge: &mut dyn ScoreJudge,
        rng: &mut R,
    ) -> Result<VerificationOutcome, MatchError> {
        policy.validate()?;
        if policy.mode != FusionMode::UnconditionalAnd {
            return Err(MatchError::WrongMode(policy.mode));
        }
        if policy.modality_count() != self.enrolled.len() {
            return Err(MatchError::ArityMismatch {
                expected: self.enrolled.len(),
                got: policy.modality_count(),
            });
        }
        let before = self.ev.counts();
        let score = self.fused_score(reference, probe, rng)?;
        let result = judge.judge(1, &score)?;
        let verdict = if result.decision == StageDecision::Accept {
            Verdict::Accept
        } else {
            Verdict::Reject
        };
        Ok(VerificationOutcome {
            verdict,
            stages_used: 1,
            probes_acquired: probe.parts().len(),
            stages: vec![result],
            op_counts: self.ev.counts() - before,
        })
    }
}

/// Running state of an incremental comparison: the reference rotated so the
/// most recently used block sits at slots `[0, d)`, and the encrypted
/// cumulative inner product.
#[derive(Clone, Debug)]
pub struct Cascade {
    aligned: Ciphertext,
    aligned_block: usize,
    score: Option<Ciphertext>,
    stage: usize,
}

impl Cascade {
    /// Stages completed so far.
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn score(&self) -> Option<&Ciphertext> {
        self.score.as_ref()
    }

    /// Adds the next probe: realign the reference to the probe's block,
    /// take the inner product and accumulate it. Returns the new cumulative
    /// encrypted score.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        matcher: &EncryptedMatcher<'_>,
        probe: &Template,
        rng: &mut R,
    ) -> Result<Ciphertext, MatchError> {
        let d = matcher.layout.template_len();
        if probe.len() != d {
            return Err(MatchError::LengthMismatch {
                expected: d,
                got: probe.len(),
            });
        }
        let block = matcher.block_of(probe.modality())?;
        let aligned = realign(matcher.ev, &self.aligned, self.aligned_block, block, &matcher.layout, matcher.evk)?;
        let ip = matcher.probe_inner_product(&aligned, probe.values(), rng)?;
        let score = accumulate_score(matcher.ev, self.score.as_ref(), &ip)?;
        self.aligned = aligned;
        self.aligned_block = block;
        self.score = Some(score.clone());
        self.stage += 1;
        Ok(score)
    }
}
