//! Verifier role: stores encrypted references, holds the secret key and
//! answers each encrypted score with a binary decision.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use hefuse_ckks::{BinaryFormat, Ciphertext, Evaluator};

use super::clock::{Clock, RetryLimiter};
use super::store::{ReferenceStore, StoreError};
use super::transport::Transport;
use super::wire::{ErrorCode, Message, WireVerdict, ALL_MODALITIES};
use super::ProtocolError;
use crate::keystore::ServerKeys;
use crate::matcher::{judge_score, FusionMode, MatchPolicy, StageDecision, StageResult, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerConfig {
    /// Failed sessions per subject tolerated inside `retry_window`.
    pub retry_limit: usize,
    pub retry_window: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            retry_limit: 5,
            retry_window: Duration::from_secs(300),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionState {
    AwaitScore { stage: usize },
    AwaitNextModality { stage: usize },
    Closed,
}

/// Server-side record of one verification attempt. Scores stay here.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub session_id: u64,
    pub subject_id: String,
    pub state: SessionState,
    pub stages: Vec<StageResult>,
    pub verdict: Option<Verdict>,
    pub error: Option<ErrorCode>,
}

impl SessionRecord {
    fn advance(&mut self, next: SessionState) {
        debug_assert!(
            !matches!(self.state, SessionState::Closed),
            "closed sessions do not transition"
        );
        self.state = next;
    }
}

pub struct Server {
    keys: ServerKeys,
    evaluator: Evaluator,
    policy: MatchPolicy,
    keys_message: Message,
    store: RwLock<ReferenceStore>,
    limiter: Mutex<RetryLimiter>,
    clock: Arc<dyn Clock>,
    next_session: AtomicU64,
    sessions: Mutex<Vec<SessionRecord>>,
}

fn error(code: ErrorCode, text: &str) -> Message {
    Message::Error {
        code: code.to_u16(),
        text: text.to_string(),
    }
}

impl Server {
    pub fn new(
        keys: ServerKeys,
        policy: MatchPolicy,
        store: ReferenceStore,
        config: ServerConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ProtocolError> {
        policy.validate()?;
        let enrolled = &keys.layout.modalities;
        if let Some(m) = policy.modality_order.iter().find(|m| !enrolled.contains(m)) {
            return Err(ProtocolError::Config(format!("policy modality {m} is not enrolled")));
        }
        if policy.modality_count() != enrolled.len() {
            return Err(ProtocolError::Config(format!(
                "policy covers {} modalities, references hold {}",
                policy.modality_count(),
                enrolled.len()
            )));
        }
        if keys.context.max_level() < 1 {
            return Err(ProtocolError::Config("parameters leave no multiplicative level".into()));
        }
        Ok(Self {
            evaluator: keys.evaluator(),
            keys_message: keys.public_message(),
            keys,
            policy,
            store: RwLock::new(store),
            limiter: Mutex::new(RetryLimiter::new(config.retry_limit, config.retry_window)),
            clock,
            next_session: AtomicU64::new(1),
            sessions: Mutex::new(Vec::new()),
        })
    }

    pub fn policy(&self) -> &MatchPolicy {
        &self.policy
    }

    pub fn keys(&self) -> &ServerKeys {
        &self.keys
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    /// Serialized reference of `id`, if enrolled.
    pub fn reference(&self, id: &str) -> Option<Vec<u8>> {
        self.store.read().unwrap().get(id).map(<[u8]>::to_vec)
    }

    pub fn enrolled_count(&self) -> usize {
        self.store.read().unwrap().len()
    }

    pub fn sessions(&self) -> Vec<SessionRecord> {
        self.sessions.lock().unwrap().clone()
    }

    /// Serves one connection until the peer hangs up.
    pub fn serve(&self, transport: &mut dyn Transport) -> Result<(), ProtocolError> {
        transport.send(&self.keys_message)?;
        loop {
            let msg = match transport.recv() {
                Ok(m) => m,
                Err(ProtocolError::Closed) => return Ok(()),
                Err(ProtocolError::Wire(e)) => {
                    transport.send(&error(ErrorCode::Wire(e.code()), "malformed message"))?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            match msg {
                Message::Enroll {
                    subject_id,
                    modality_count,
                    replace,
                    reference,
                } => {
                    let reply = self.enroll(&subject_id, modality_count, replace, reference);
                    transport.send(&reply)?;
                }
                Message::VerifyClaim { subject_id } => self.verify(transport, &subject_id)?,
                _ => transport.send(&error(ErrorCode::UnexpectedMessage, "unexpected message"))?,
            }
        }
    }

    fn check_ciphertext(&self, blob: &[u8], level: usize) -> Result<Ciphertext, ErrorCode> {
        let ct = Ciphertext::from_bytes(blob).map_err(|_| ErrorCode::MalformedCiphertext)?;
        self.keys
            .context
            .validate_ciphertext(&ct)
            .map_err(|_| ErrorCode::MalformedCiphertext)?;
        if ct.part_count() != 2 {
            return Err(ErrorCode::MalformedCiphertext);
        }
        if ct.level() != level {
            return Err(ErrorCode::LevelMismatch);
        }
        Ok(ct)
    }

    fn enroll(&self, id: &str, modality_count: u8, replace: bool, blob: Vec<u8>) -> Message {
        let expected = self.keys.layout.modalities.len();
        if modality_count as usize != expected {
            return error(ErrorCode::ArityMismatch, "wrong number of modalities");
        }
        if let Err(code) = self.check_ciphertext(&blob, self.keys.context.max_level()) {
            return error(code, "reference rejected");
        }
        match self.store.write().unwrap().put(id, blob, replace) {
            Ok(()) => Message::EnrollAck {
                subject_id: id.to_string(),
            },
            Err(StoreError::Duplicate(_)) => error(ErrorCode::DuplicateSubject, "subject already enrolled"),
            Err(StoreError::InvalidId) => error(ErrorCode::Wire(7), "invalid subject id"),
            Err(StoreError::Io(_)) => error(ErrorCode::Internal, "store unavailable"),
        }
    }

    fn verify(&self, transport: &mut dyn Transport, subject: &str) -> Result<(), ProtocolError> {
        let mut rec = SessionRecord {
            session_id: self.next_session.fetch_add(1, Ordering::Relaxed),
            subject_id: subject.to_string(),
            state: SessionState::AwaitNextModality { stage: 0 },
            stages: Vec::new(),
            verdict: None,
            error: None,
        };
        let result = self.run_session(transport, &mut rec);
        rec.state = SessionState::Closed;
        let now = self.clock.now();
        {
            let mut limiter = self.limiter.lock().unwrap();
            match (rec.verdict, rec.error) {
                (Some(Verdict::Accept), _) => limiter.record_success(subject),
                (Some(Verdict::Reject), _) => limiter.record_failure(subject, now),
                (None, Some(ErrorCode::StaleStage | ErrorCode::MalformedCiphertext | ErrorCode::LevelMismatch)) => {
                    limiter.record_failure(subject, now)
                }
                _ => {}
            }
        }
        self.sessions.lock().unwrap().push(rec);
        result
    }

    fn fail(&self, t: &mut dyn Transport, rec: &mut SessionRecord, code: ErrorCode, text: &str) -> Result<(), ProtocolError> {
        rec.error = Some(code);
        t.send(&error(code, text))
    }

    fn run_session(&self, t: &mut dyn Transport, rec: &mut SessionRecord) -> Result<(), ProtocolError> {
        let blocked = self.limiter.lock().unwrap().is_blocked(&rec.subject_id, self.clock.now());
        if blocked {
            return self.fail(t, rec, ErrorCode::Throttled, "too many failed attempts");
        }
        let Some(reference) = self.reference(&rec.subject_id) else {
            return self.fail(t, rec, ErrorCode::UnknownSubject, "unknown subject");
        };
        t.send(&Message::Reference { reference })?;

        let policy = &self.policy;
        let score_level = self.keys.context.max_level() - 1;
        let stages = policy.stage_count();
        for stage in 1..=stages {
            let (modality, block) = match policy.mode {
                FusionMode::SequentialOr => {
                    let m = policy.modality_order[stage - 1];
                    let block = self.keys.layout.modalities.iter().position(|&e| e == m).unwrap() + 1;
                    (m.code(), block as u8)
                }
                FusionMode::UnconditionalAnd => (ALL_MODALITIES, 0),
            };
            t.send(&Message::RequestModality {
                stage: stage as u8,
                modality,
                block,
            })?;
            rec.advance(SessionState::AwaitScore { stage });
            let score = match t.recv() {
                Ok(Message::Score { stage: s, score }) if s as usize == stage => score,
                Ok(Message::Score { .. }) => return self.fail(t, rec, ErrorCode::StaleStage, "unexpected stage"),
                Ok(_) => return self.fail(t, rec, ErrorCode::UnexpectedMessage, "expected a score"),
                Err(ProtocolError::Wire(e)) => return self.fail(t, rec, ErrorCode::Wire(e.code()), "malformed message"),
                Err(e) => return Err(e),
            };
            let ct = match self.check_ciphertext(&score, score_level) {
                Ok(ct) => ct,
                Err(code) => return self.fail(t, rec, code, "score rejected"),
            };
            let result = match judge_score(&self.evaluator, &self.keys.secret_key, policy, stage, &ct) {
                Ok(r) => r,
                Err(_) => return self.fail(t, rec, ErrorCode::Internal, "score rejected"),
            };
            let accepted = result.decision == StageDecision::Accept;
            rec.stages.push(result);
            let verdict = if accepted { WireVerdict::Accept } else { WireVerdict::Reject };
            t.send(&Message::Decision {
                stage: stage as u8,
                verdict,
            })?;
            if accepted {
                rec.verdict = Some(Verdict::Accept);
                return Ok(());
            }
            rec.advance(SessionState::AwaitNextModality { stage });
        }
        rec.verdict = Some(Verdict::Reject);
        Ok(())
    }
}
