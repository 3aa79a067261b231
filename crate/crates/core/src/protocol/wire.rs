//! Length-framed binary messages.
//!
//! Every message is an 11-byte header followed by the payload:
//!
//! ```text
//! magic "AFHE" | version u16 LE | msg_type u8 | payload_len u32 LE | payload
//! ```
//!
//! Payload fields are little-endian. Strings carry a u16 byte-length prefix
//! and must be UTF-8; opaque blobs (serialized keys and ciphertexts) carry a
//! u32 length prefix. A decoded message must consume its payload exactly.

use thiserror::Error;

pub const WIRE_MAGIC: &[u8; 4] = b"AFHE";
pub const WIRE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;
/// Largest payload accepted from a peer.
pub const MAX_PAYLOAD: u32 = 256 << 20;

/// Modality byte in REQUEST_MODALITY asking for every modality at once.
pub const ALL_MODALITIES: u8 = 0xff;

pub mod msg_type {
    pub const KEYS: u8 = 0x10;
    pub const ENROLL: u8 = 0x11;
    pub const ENROLL_ACK: u8 = 0x12;
    pub const VERIFY_CLAIM: u8 = 0x13;
    pub const REFERENCE: u8 = 0x14;
    pub const REQUEST_MODALITY: u8 = 0x15;
    pub const SCORE: u8 = 0x16;
    pub const DECISION: u8 = 0x17;
    pub const ERROR: u8 = 0x1f;
}

/// Decoding failures, one code per malformation class.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("header truncated: {0} of {HEADER_LEN} bytes")]
    TruncatedHeader(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("payload length {declared} does not match the {actual} bytes present")]
    LengthMismatch { declared: u32, actual: usize },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("invalid field value: {0}")]
    InvalidValue(String),
}

impl WireError {
    pub fn code(&self) -> u16 {
        match self {
            WireError::TruncatedHeader(_) => 1,
            WireError::BadMagic(_) => 2,
            WireError::UnsupportedVersion(_) => 3,
            WireError::UnknownType(_) => 4,
            WireError::LengthMismatch { .. } => 5,
            WireError::MalformedPayload(_) => 6,
            WireError::InvalidValue(_) => 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum WireVerdict {
    Reject = 0,
    Accept = 1,
}

/// Application error codes carried by ERROR messages. Codes 1-7 echo
/// [`WireError::code`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCode {
    Wire(u16),
    UnknownSubject,
    DuplicateSubject,
    ArityMismatch,
    MalformedCiphertext,
    Throttled,
    UnexpectedMessage,
    StaleStage,
    LevelMismatch,
    Internal,
    Other(u16),
}

impl ErrorCode {
    pub fn to_u16(self) -> u16 {
        match self {
            ErrorCode::Wire(c) => c,
            ErrorCode::UnknownSubject => 0x100,
            ErrorCode::DuplicateSubject => 0x101,
            ErrorCode::ArityMismatch => 0x102,
            ErrorCode::MalformedCiphertext => 0x103,
            ErrorCode::Throttled => 0x104,
            ErrorCode::UnexpectedMessage => 0x105,
            ErrorCode::StaleStage => 0x106,
            ErrorCode::LevelMismatch => 0x107,
            ErrorCode::Internal => 0x1ff,
            ErrorCode::Other(c) => c,
        }
    }

    pub fn from_u16(c: u16) -> Self {
        match c {
            1..=7 => ErrorCode::Wire(c),
            0x100 => ErrorCode::UnknownSubject,
            0x101 => ErrorCode::DuplicateSubject,
            0x102 => ErrorCode::ArityMismatch,
            0x103 => ErrorCode::MalformedCiphertext,
            0x104 => ErrorCode::Throttled,
            0x105 => ErrorCode::UnexpectedMessage,
            0x106 => ErrorCode::StaleStage,
            0x107 => ErrorCode::LevelMismatch,
            0x1ff => ErrorCode::Internal,
            c => ErrorCode::Other(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    /// Server to client at connection start: reference layout and public
    /// key material.
    Keys {
        template_len: u32,
        modalities: Vec<u8>,
        params: Vec<u8>,
        public_key: Vec<u8>,
        eval_keys: Vec<u8>,
    },
    Enroll {
        subject_id: String,
        modality_count: u8,
        replace: bool,
        reference: Vec<u8>,
    },
    EnrollAck {
        subject_id: String,
    },
    VerifyClaim {
        subject_id: String,
    },
    Reference {
        reference: Vec<u8>,
    },
    RequestModality {
        stage: u8,
        modality: u8,
        block: u8,
    },
    Score {
        stage: u8,
        score: Vec<u8>,
    },
    Decision {
        stage: u8,
        verdict: WireVerdict,
    },
    Error {
        code: u16,
        text: String,
    },
}

/// What a payload field holds. Used to audit transcripts: no variant may
/// carry plaintext templates or scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    SubjectId,
    LayoutInfo,
    ParamsBlob,
    PublicKeyBlob,
    EvalKeyBlob,
    CiphertextBlob,
    Stage,
    ModalityCode,
    Count,
    Flag,
    Verdict,
    ErrorCode,
    ErrorText,
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::Keys { .. } => KEYS,
            Message::Enroll { .. } => ENROLL,
            Message::EnrollAck { .. } => ENROLL_ACK,
            Message::VerifyClaim { .. } => VERIFY_CLAIM,
            Message::Reference { .. } => REFERENCE,
            Message::RequestModality { .. } => REQUEST_MODALITY,
            Message::Score { .. } => SCORE,
            Message::Decision { .. } => DECISION,
            Message::Error { .. } => ERROR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Keys { .. } => "KEYS",
            Message::Enroll { .. } => "ENROLL",
            Message::EnrollAck { .. } => "ENROLL_ACK",
            Message::VerifyClaim { .. } => "VERIFY_CLAIM",
            Message::Reference { .. } => "REFERENCE",
            Message::RequestModality { .. } => "REQUEST_MODALITY",
            Message::Score { .. } => "SCORE",
            Message::Decision { .. } => "DECISION",
            Message::Error { .. } => "ERROR",
        }
    }

    /// Field kinds of this message, in payload order.
    pub fn schema(&self) -> &'static [FieldKind] {
        use FieldKind::*;
        match self {
            Message::Keys { .. } => &[LayoutInfo, LayoutInfo, ParamsBlob, PublicKeyBlob, EvalKeyBlob],
            Message::Enroll { .. } => &[SubjectId, Count, Flag, CiphertextBlob],
            Message::EnrollAck { .. } | Message::VerifyClaim { .. } => &[SubjectId],
            Message::Reference { .. } => &[CiphertextBlob],
            Message::RequestModality { .. } => &[Stage, ModalityCode, Stage],
            Message::Score { .. } => &[Stage, CiphertextBlob],
            Message::Decision { .. } => &[Stage, Verdict],
            Message::Error { .. } => &[ErrorCode, ErrorText],
        }
    }

    /// Opaque blobs with their kinds.
    pub fn blobs(&self) -> Vec<(FieldKind, &[u8])> {
        match self {
            Message::Keys {
                params,
                public_key,
                eval_keys,
                ..
            } => vec![
                (FieldKind::ParamsBlob, params),
                (FieldKind::PublicKeyBlob, public_key),
                (FieldKind::EvalKeyBlob, eval_keys),
            ],
            Message::Enroll { reference, .. } | Message::Reference { reference } => {
                vec![(FieldKind::CiphertextBlob, reference)]
            }
            Message::Score { score, .. } => vec![(FieldKind::CiphertextBlob, score)],
            _ => Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.encode_payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(WIRE_MAGIC);
        out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
        out.push(self.msg_type());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    fn encode_payload(&self) -> Vec<u8> {
        let mut p = Payload::default();
        match self {
            Message::Keys {
                template_len,
                modalities,
                params,
                public_key,
                eval_keys,
            } => {
                p.u32(*template_len);
                p.u8(modalities.len() as u8);
                p.raw(modalities);
                p.blob(params);
                p.blob(public_key);
                p.blob(eval_keys);
            }
            Message::Enroll {
                subject_id,
                modality_count,
                replace,
                reference,
            } => {
                p.str(subject_id);
                p.u8(*modality_count);
                p.u8(*replace as u8);
                p.blob(reference);
            }
            Message::EnrollAck { subject_id } | Message::VerifyClaim { subject_id } => p.str(subject_id),
            Message::Reference { reference } => p.blob(reference),
            Message::RequestModality { stage, modality, block } => {
                p.u8(*stage);
                p.u8(*modality);
                p.u8(*block);
            }
            Message::Score { stage, score } => {
                p.u8(*stage);
                p.blob(score);
            }
            Message::Decision { stage, verdict } => {
                p.u8(*stage);
                p.u8(*verdict as u8);
            }
            Message::Error { code, text } => {
                p.u16(*code);
                p.str(text);
            }
        }
        p.0
    }

    /// Decodes exactly one message occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let header = Header::parse(bytes)?;
        let payload = &bytes[HEADER_LEN..];
        if header.payload_len as usize != payload.len() {
            return Err(WireError::LengthMismatch {
                declared: header.payload_len,
                actual: payload.len(),
            });
        }
        Self::decode_payload(header.msg_type, payload)
    }

    pub fn decode_payload(kind: u8, payload: &[u8]) -> Result<Self, WireError> {
        let mut r = Fields { data: payload, pos: 0 };
        let msg = match kind {
            msg_type::KEYS => {
                let template_len = r.u32()?;
                let n = r.u8()? as usize;
                let modalities = r.raw(n)?.to_vec();
                let params = r.blob()?;
                let public_key = r.blob()?;
                let eval_keys = r.blob()?;
                if template_len == 0 || n == 0 {
                    return Err(WireError::InvalidValue("empty reference layout".into()));
                }
                Message::Keys {
                    template_len,
                    modalities,
                    params,
                    public_key,
                    eval_keys,
                }
            }
            msg_type::ENROLL => {
                let subject_id = r.subject()?;
                let modality_count = r.u8()?;
                let replace = r.flag()?;
                let reference = r.blob()?;
                if modality_count == 0 {
                    return Err(WireError::InvalidValue("zero modalities".into()));
                }
                Message::Enroll {
                    subject_id,
                    modality_count,
                    replace,
                    reference,
                }
            }
            msg_type::ENROLL_ACK => Message::EnrollAck { subject_id: r.subject()? },
            msg_type::VERIFY_CLAIM => Message::VerifyClaim { subject_id: r.subject()? },
            msg_type::REFERENCE => Message::Reference { reference: r.blob()? },
            msg_type::REQUEST_MODALITY => Message::RequestModality {
                stage: r.stage()?,
                modality: r.u8()?,
                block: r.u8()?,
            },
            msg_type::SCORE => Message::Score {
                stage: r.stage()?,
                score: r.blob()?,
            },
            msg_type::DECISION => {
                let stage = r.stage()?;
                let verdict = match r.u8()? {
                    0 => WireVerdict::Reject,
                    1 => WireVerdict::Accept,
                    v => return Err(WireError::InvalidValue(format!("verdict {v}"))),
                };
                Message::Decision { stage, verdict }
            }
            msg_type::ERROR => Message::Error {
                code: r.u16()?,
                text: r.str()?,
            },
            other => return Err(WireError::UnknownType(other)),
        };
        if r.pos != payload.len() {
            return Err(WireError::MalformedPayload(format!(
                "{} trailing bytes",
                payload.len() - r.pos
            )));
        }
        Ok(msg)
    }
}

/// Parsed fixed header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub msg_type: u8,
    pub payload_len: u32,
}

impl Header {
    /// Validates the first [`HEADER_LEN`] bytes of `bytes`.
    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::TruncatedHeader(bytes.len()));
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if &magic != WIRE_MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != WIRE_VERSION {
            return Err(WireError::UnsupportedVersion(version));
        }
        let msg_type = bytes[6];
        if !matches!(msg_type, 0x10..=0x17 | 0x1f) {
            return Err(WireError::UnknownType(msg_type));
        }
        let payload_len = u32::from_le_bytes(bytes[7..11].try_into().unwrap());
        if payload_len > MAX_PAYLOAD {
            return Err(WireError::LengthMismatch {
                declared: payload_len,
                actual: bytes.len() - HEADER_LEN,
            });
        }
        Ok(Self { msg_type, payload_len })
    }
}

#[derive(Default)]
struct Payload(Vec<u8>);

impl Payload {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn raw(&mut self, v: &[u8]) {
        self.0.extend_from_slice(v);
    }

    fn str(&mut self, s: &str) {
        let b = s.as_bytes();
        let n = b.len().min(u16::MAX as usize);
        self.u16(n as u16);
        self.raw(&b[..n]);
    }

    fn blob(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.raw(b);
    }
}

struct Fields<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Fields<'a> {
    fn raw(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        match self.pos.checked_add(n).filter(|&e| e <= self.data.len()) {
            Some(end) => {
                let s = &self.data[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(WireError::MalformedPayload(format!(
                "field of {n} bytes at offset {} overruns the payload",
                self.pos
            ))),
        }
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.raw(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.raw(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.raw(4)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, WireError> {
        let n = self.u16()? as usize;
        std::str::from_utf8(self.raw(n)?)
            .map(str::to_string)
            .map_err(|_| WireError::MalformedPayload("string is not UTF-8".into()))
    }

    fn subject(&mut self) -> Result<String, WireError> {
        let s = self.str()?;
        if s.is_empty() {
            return Err(WireError::InvalidValue("empty subject id".into()));
        }
        Ok(s)
    }

    fn blob(&mut self) -> Result<Vec<u8>, WireError> {
        let n = self.u32()? as usize;
        Ok(self.raw(n)?.to_vec())
    }

    fn stage(&mut self) -> Result<u8, WireError> {
        match self.u8()? {
            0 => Err(WireError::InvalidValue("stage 0".into())),
            s => Ok(s),
        }
    }

    fn flag(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(WireError::InvalidValue(format!("flag {v}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_layout() {
        let b = Message::Decision {
            stage: 1,
            verdict: WireVerdict::Accept,
        }
        .encode();
        assert_eq!(b, [b'A', b'F', b'H', b'E', 1, 0, 0x17, 2, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn truncated_payload_is_a_length_error() {
        let b = Message::VerifyClaim {
            subject_id: "alice".into(),
        }
        .encode();
        assert!(matches!(
            Message::decode(&b[..b.len() - 1]),
            Err(WireError::LengthMismatch { declared: 7, actual: 6 })
        ));
    }

    #[test]
    fn error_codes_are_distinct() {
        let errs = [
            WireError::TruncatedHeader(0),
            WireError::BadMagic(*b"XXXX"),
            WireError::UnsupportedVersion(2),
            WireError::UnknownType(0),
            WireError::LengthMismatch { declared: 0, actual: 1 },
            WireError::MalformedPayload(String::new()),
            WireError::InvalidValue(String::new()),
        ];
        let mut codes: Vec<u16> = errs.iter().map(WireError::code).collect();
        codes.dedup();
        assert_eq!(codes.len(), 7);
        for c in [0x100, 0x104, 0x1ff, 3, 0x999] {
            assert_eq!(ErrorCode::from_u16(c).to_u16(), c);
        }
    }
}
