//! Capturing role: encrypts templates, computes encrypted scores, never
//! holds the secret key.

use std::sync::Arc;

use hefuse_ckks::{BinaryFormat, Ciphertext};
use rand::Rng;

use super::transport::{Direction, Recorder, Transport};
use super::wire::{ErrorCode, Message, WireVerdict, ALL_MODALITIES};
use super::ProtocolError;
use crate::biometric::{FusedTemplate, Modality};
use crate::keystore::{ClientKeys, KeyCache};
use crate::matcher::{EncryptedMatcher, MatchError, ProbeSource, Verdict};

/// What the client learns from one verification.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientOutcome {
    pub verdict: Verdict,
    pub stages_used: usize,
    /// Set when the server answered with an ERROR instead of a decision.
    pub error: Option<(ErrorCode, String)>,
    pub transcript: Vec<(Direction, Message)>,
}

pub struct Client<T: Transport> {
    transport: Recorder<T>,
    keys: Arc<ClientKeys>,
}

fn remote(code: u16, text: String) -> ProtocolError {
    ProtocolError::Remote {
        code: ErrorCode::from_u16(code),
        text,
    }
}

impl<T: Transport> Client<T> {
    /// Receives the server's KEYS message, reusing cached keys when the
    /// fingerprint is known.
    pub fn connect(transport: T, cache: &mut KeyCache) -> Result<Self, ProtocolError> {
        let mut transport = Recorder::new(transport);
        let msg = transport.recv()?;
        let keys = match msg {
            Message::Keys { .. } => cache.resolve(&msg)?,
            Message::Error { code, text } => return Err(remote(code, text)),
            other => return Err(ProtocolError::Unexpected(other.name())),
        };
        transport.take_log();
        Ok(Self { transport, keys })
    }

    pub fn keys(&self) -> &Arc<ClientKeys> {
        &self.keys
    }

    fn matcher(&self) -> Result<EncryptedMatcher<'_>, MatchError> {
        let k = &*self.keys;
        EncryptedMatcher::new(
            &k.evaluator,
            &k.public_key,
            &k.eval_keys,
            k.layout.modalities.clone(),
            k.layout.template_len,
        )
    }

    /// Encrypts the fused templates in reference block order and stores
    /// them under `subject_id`.
    pub fn enroll<R: Rng + ?Sized>(
        &mut self,
        subject_id: &str,
        fused: &FusedTemplate,
        replace: bool,
        rng: &mut R,
    ) -> Result<(), ProtocolError> {
        let ct = self.matcher()?.encrypt_reference(fused, rng)?;
        self.enroll_raw(subject_id, fused.parts().len() as u8, replace, ct.to_bytes())
    }

    /// Sends an ENROLL with an already serialized reference.
    pub fn enroll_raw(&mut self, subject_id: &str, modality_count: u8, replace: bool, reference: Vec<u8>) -> Result<(), ProtocolError> {
        self.transport.send(&Message::Enroll {
            subject_id: subject_id.to_string(),
            modality_count,
            replace,
            reference,
        })?;
        let reply = self.transport.recv();
        self.transport.take_log();
        match reply? {
            Message::EnrollAck { subject_id: ack } if ack == subject_id => Ok(()),
            Message::Error { code, text } => Err(remote(code, text)),
            other => Err(ProtocolError::Unexpected(other.name())),
        }
    }

    /// Runs one verification, acquiring probes only when the server asks.
    pub fn verify<R: Rng + ?Sized>(
        &mut self,
        subject_id: &str,
        probes: &mut dyn ProbeSource,
        rng: &mut R,
    ) -> Result<ClientOutcome, ProtocolError> {
        self.transport.take_log();
        let result = self.run_verify(subject_id, probes, rng);
        let transcript = self.transport.take_log();
        result.map(|(verdict, stages_used, error)| ClientOutcome {
            verdict,
            stages_used,
            error,
            transcript,
        })
    }

    #[allow(clippy::type_complexity)]
    fn run_verify<R: Rng + ?Sized>(
        &mut self,
        subject_id: &str,
        probes: &mut dyn ProbeSource,
        rng: &mut R,
    ) -> Result<(Verdict, usize, Option<(ErrorCode, String)>), ProtocolError> {
        self.transport.send(&Message::VerifyClaim {
            subject_id: subject_id.to_string(),
        })?;
        let reference = match self.transport.recv()? {
            Message::Reference { reference } => reference,
            Message::Error { code, text } => return Ok((Verdict::Reject, 0, Some((ErrorCode::from_u16(code), text)))),
            other => return Err(ProtocolError::Unexpected(other.name())),
        };
        let keys = self.keys.clone();
        let matcher = EncryptedMatcher::new(
            &keys.evaluator,
            &keys.public_key,
            &keys.eval_keys,
            keys.layout.modalities.clone(),
            keys.layout.template_len,
        )?;
        let reference = Ciphertext::from_bytes(&reference)?;
        let mut cascade = matcher.start(&reference)?;
        let modality_count = keys.layout.modalities.len();
        loop {
            let (stage, modality, block) = match self.transport.recv()? {
                Message::RequestModality { stage, modality, block } => (stage, modality, block),
                Message::Error { code, text } => {
                    return Ok((Verdict::Reject, cascade.stage(), Some((ErrorCode::from_u16(code), text))))
                }
                other => return Err(ProtocolError::Unexpected(other.name())),
            };
            let fused_request = modality == ALL_MODALITIES;
            let score = if fused_request {
                let parts = keys
                    .layout
                    .modalities
                    .iter()
                    .map(|&m| probes.acquire(stage as usize, m))
                    .collect::<Result<Vec<_>, _>>()?;
                let fused = FusedTemplate::concatenate(parts).map_err(MatchError::from)?;
                matcher.fused_score(&reference, &fused, rng)?
            } else {
                let m = Modality::from_code(modality);
                if matcher.block_of(m)? != block as usize {
                    return Err(ProtocolError::Unexpected("REQUEST_MODALITY with inconsistent block"));
                }
                let probe = probes.acquire(stage as usize, m)?;
                cascade.advance(&matcher, &probe, rng)?
            };
            self.transport.send(&Message::Score {
                stage,
                score: score.to_bytes(),
            })?;
            match self.transport.recv()? {
                Message::Decision { stage: s, verdict } if s == stage => {
                    let stages_used = stage as usize;
                    if verdict == WireVerdict::Accept {
                        return Ok((Verdict::Accept, stages_used, None));
                    }
                    if fused_request || stages_used >= modality_count {
                        return Ok((Verdict::Reject, stages_used, None));
                    }
                }
                Message::Error { code, text } => {
                    return Ok((Verdict::Reject, stage as usize, Some((ErrorCode::from_u16(code), text))))
                }
                other => return Err(ProtocolError::Unexpected(other.name())),
            }
        }
    }
}
