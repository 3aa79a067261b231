//! Key material of the verifier and its public projection for clients.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use hefuse_ckks::{
    keygen, BinaryFormat, CkksContext, CkksError, CkksParams, EvaluationKeys, Evaluator, PackedLayout, PublicKey,
    SecretKey,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::biometric::Modality;
use crate::protocol::wire::Message;

#[derive(Debug, Error)]
pub enum KeyError {
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error("key file I/O: {0}")]
    Io(#[from] io::Error),
    #[error("layout file: {0}")]
    Layout(#[from] serde_json::Error),
    #[error("invalid key material: {0}")]
    Invalid(String),
}

/// Reference layout shared by every enrolled ciphertext.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLayout {
    pub template_len: usize,
    pub modalities: Vec<Modality>,
}

impl ReferenceLayout {
    pub fn packed(&self, slot_count: usize) -> Result<PackedLayout, KeyError> {
        Ok(PackedLayout::new(self.template_len, self.modalities.len(), slot_count)?)
    }
}

/// SHA-256 over the serialized public material.
pub fn key_fingerprint(params: &[u8], public_key: &[u8], eval_keys: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(params);
    h.update(public_key);
    h.update(eval_keys);
    h.finalize().into()
}

/// Full key set held by the verifying server.
pub struct ServerKeys {
    pub layout: ReferenceLayout,
    pub context: Arc<CkksContext>,
    pub secret_key: SecretKey,
    pub public_key: PublicKey,
    pub eval_keys: EvaluationKeys,
}

const PARAMS_FILE: &str = "params.bin";
const SECRET_FILE: &str = "secret.key";
const PUBLIC_FILE: &str = "public.key";
const EVAL_FILE: &str = "eval.key";
const LAYOUT_FILE: &str = "layout.json";

impl ServerKeys {
    /// Generates keys with every rotation the layout needs.
    pub fn generate<R: Rng + ?Sized>(params: CkksParams, layout: ReferenceLayout, rng: &mut R) -> Result<Self, KeyError> {
        let context = CkksContext::new(params)?;
        let packed = layout.packed(context.slot_count())?;
        let (secret_key, public_key, eval_keys) = keygen(&context, packed.required_rotation_steps(), rng)?;
        Ok(Self {
            layout,
            context,
            secret_key,
            public_key,
            eval_keys,
        })
    }

    pub fn evaluator(&self) -> Evaluator {
        Evaluator::new(self.context.clone())
    }

    pub fn save(&self, dir: &Path) -> Result<(), KeyError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PARAMS_FILE), self.context.params().to_bytes())?;
        fs::write(dir.join(SECRET_FILE), self.secret_key.to_bytes())?;
        fs::write(dir.join(PUBLIC_FILE), self.public_key.to_bytes())?;
        fs::write(dir.join(EVAL_FILE), self.eval_keys.to_bytes())?;
        fs::write(dir.join(LAYOUT_FILE), serde_json::to_string_pretty(&self.layout)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, KeyError> {
        let params = CkksParams::from_bytes(&fs::read(dir.join(PARAMS_FILE))?)?;
        let context = CkksContext::new(params)?;
        let layout: ReferenceLayout = serde_json::from_slice(&fs::read(dir.join(LAYOUT_FILE))?)?;
        layout.packed(context.slot_count())?;
        let keys = Self {
            layout,
            secret_key: SecretKey::from_bytes(&fs::read(dir.join(SECRET_FILE))?)?,
            public_key: PublicKey::from_bytes(&fs::read(dir.join(PUBLIC_FILE))?)?,
            eval_keys: EvaluationKeys::from_bytes(&fs::read(dir.join(EVAL_FILE))?)?,
            context,
        };
        keys.check()?;
        Ok(keys)
    }

    fn check(&self) -> Result<(), KeyError> {
        let n = self.context.ring_dim();
        let all = self.context.max_level() + 2;
        if self.secret_key.poly().degree() != n || self.secret_key.poly().residue_count() != all {
            return Err(KeyError::Invalid("secret key does not match parameters".into()));
        }
        let packed = self.layout.packed(self.context.slot_count())?;
        if let Some(s) = packed.required_rotation_steps().into_iter().find(|&s| !self.eval_keys.has_step(s)) {
            return Err(KeyError::Invalid(format!("missing rotation key for step {s}")));
        }
        Ok(())
    }

    /// The KEYS message announcing layout and public material.
    pub fn public_message(&self) -> Message {
        Message::Keys {
            template_len: self.layout.template_len as u32,
            modalities: self.layout.modalities.iter().map(|m| m.code()).collect(),
            params: self.context.params().to_bytes(),
            public_key: self.public_key.to_bytes(),
            eval_keys: self.eval_keys.to_bytes(),
        }
    }
}

/// Public key material as received by a client.
pub struct ClientKeys {
    pub layout: ReferenceLayout,
    pub evaluator: Evaluator,
    pub public_key: PublicKey,
    pub eval_keys: EvaluationKeys,
    pub fingerprint: [u8; 32],
}

impl ClientKeys {
    pub fn from_message(msg: &Message) -> Result<Self, KeyError> {
        let Message::Keys {
            template_len,
            modalities,
            params,
            public_key,
            eval_keys,
        } = msg
        else {
            return Err(KeyError::Invalid(format!("expected KEYS, got {}", msg.name())));
        };
        let fingerprint = key_fingerprint(params, public_key, eval_keys);
        let context = CkksContext::new(CkksParams::from_bytes(params)?)?;
        let layout = ReferenceLayout {
            template_len: *template_len as usize,
            modalities: modalities.iter().map(|&c| Modality::from_code(c)).collect(),
        };
        layout.packed(context.slot_count())?;
        let public_key = PublicKey::from_bytes(public_key)?;
        let parts = public_key.parts();
        let degree_ok = [parts.0, parts.1].iter().all(|p| p.degree() == context.ring_dim());
        if !degree_ok {
            return Err(KeyError::Invalid("public key degree mismatch".into()));
        }
        Ok(Self {
            fingerprint,
            layout,
            evaluator: Evaluator::new(context),
            public_key,
            eval_keys: EvaluationKeys::from_bytes(eval_keys)?,
        })
    }
}

/// Client-side cache of parsed key sets, keyed by fingerprint.
#[derive(Default)]
pub struct KeyCache {
    entries: Vec<Arc<ClientKeys>>,
}

impl KeyCache {
    /// Returns the cached keys for `msg`, parsing them on first sight.
    pub fn resolve(&mut self, msg: &Message) -> Result<Arc<ClientKeys>, KeyError> {
        if let Message::Keys {
            params,
            public_key,
            eval_keys,
            ..
        } = msg
        {
            let fp = key_fingerprint(params, public_key, eval_keys);
            if let Some(k) = self.entries.iter().find(|k| k.fingerprint == fp) {
                return Ok(k.clone());
            }
        }
        let keys = Arc::new(ClientKeys::from_message(msg)?);
        self.entries.push(keys.clone());
        Ok(keys)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
