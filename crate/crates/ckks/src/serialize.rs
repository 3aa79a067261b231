//! Versioned binary encoding for parameters, keys, plaintexts and
//! ciphertexts.
//!
//! Layout: `"AFHE"`, format version (u16 LE), object tag (u8), then the
//! object body as little-endian u64 words. A polynomial is written as its
//! residue count, its degree, then each residue's coefficients. Encoding is
//! deterministic: equal objects give equal bytes.

use std::collections::BTreeMap;

use crate::ciphertext::{Ciphertext, Plaintext};
use crate::error::{CkksError, Result};
use crate::keys::{EvaluationKeys, KeySwitchKey, PublicKey, SecretKey};
use crate::params::CkksParams;
use crate::poly::RnsPoly;

pub const MAGIC: &[u8; 4] = b"AFHE";
pub const FORMAT_VERSION: u16 = 1;

/// Object tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ObjectTag {
    Params = 0x01,
    PublicKey = 0x02,
    EvaluationKeys = 0x03,
    Plaintext = 0x04,
    Ciphertext = 0x05,
    SecretKey = 0x06,
}

const MAX_DEGREE: u64 = crate::params::MAX_RING_DIM as u64;
const MAX_RESIDUES: u64 = 64;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(tag: ObjectTag) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(tag as u8);
        Self { buf }
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn poly(&mut self, p: &RnsPoly) {
        self.u64(p.residue_count() as u64);
        self.u64(p.degree() as u64);
        self.buf.reserve(p.residue_count() * p.degree() * 8);
        for r in p.residues() {
            for &c in r {
                self.u64(c);
            }
        }
    }

    fn ksk(&mut self, k: &KeySwitchKey) {
        self.u64(k.digits().len() as u64);
        for (b, a) in k.digits() {
            self.poly(b);
            self.poly(a);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> CkksError {
    CkksError::Malformed(msg.into())
}

impl<'a> Reader<'a> {
    fn open(data: &'a [u8], tag: ObjectTag) -> Result<Self> {
        if data.len() < 7 {
            return Err(malformed("truncated header"));
        }
        if &data[..4] != MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = u16::from_le_bytes([data[4], data[5]]);
        if version != FORMAT_VERSION {
            return Err(malformed(format!("unsupported format version {version}")));
        }
        if data[6] != tag as u8 {
            return Err(malformed(format!("expected object tag {:#04x}, found {:#04x}", tag as u8, data[6])));
        }
        Ok(Self { data, pos: 7 })
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn u64(&mut self) -> Result<u64> {
        let bytes = self
            .data
            .get(self.pos..self.pos + 8)
            .ok_or_else(|| malformed("unexpected end of data"))?;
        self.pos += 8;
        Ok(u64::from_le_bytes(bytes.try_into().expect("8 bytes")))
    }

    fn usize_bounded(&mut self, max: u64, what: &str) -> Result<usize> {
        let v = self.u64()?;
        if v > max {
            return Err(malformed(format!("{what} {v} exceeds limit {max}")));
        }
        Ok(v as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn poly(&mut self) -> Result<RnsPoly> {
        let count = self.usize_bounded(MAX_RESIDUES, "residue count")?;
        let degree = self.usize_bounded(MAX_DEGREE, "degree")?;
        let words = count
            .checked_mul(degree)
            .ok_or_else(|| malformed("polynomial size overflow"))?;
        if words * 8 > self.remaining() {
            return Err(malformed("polynomial longer than remaining data"));
        }
        let residues = (0..count)
            .map(|_| (0..degree).map(|_| self.u64()).collect::<Result<Vec<u64>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(RnsPoly::from_residues(residues))
    }

    fn ksk(&mut self) -> Result<KeySwitchKey> {
        let digits = self.usize_bounded(MAX_RESIDUES, "digit count")?;
        let digits = (0..digits)
            .map(|_| Ok((self.poly()?, self.poly()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(KeySwitchKey::from_digits(digits))
    }

    fn finish(self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(malformed(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Objects with a stable binary form.
pub trait BinaryFormat: Sized {
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(data: &[u8]) -> Result<Self>;
}

impl BinaryFormat for CkksParams {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectTag::Params);
        w.u64(self.ring_dim as u64);
        w.u64(self.modulus_chain.len() as u64);
        for &q in &self.modulus_chain {
            w.u64(q);
        }
        w.u64(self.special_prime);
        w.f64(self.scale);
        w.u64(self.security_bits as u64);
        let name = self.preset_name.as_deref().unwrap_or("");
        w.u64(name.len() as u64);
        w.buf.extend_from_slice(name.as_bytes());
        w.buf
    }

    fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, ObjectTag::Params)?;
        let ring_dim = r.usize_bounded(MAX_DEGREE, "ring dimension")?;
        let len = r.usize_bounded(MAX_RESIDUES, "chain length")?;
        let modulus_chain = (0..len).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let special_prime = r.u64()?;
        let scale = r.f64()?;
        let security_bits = u32::try_from(r.u64()?).map_err(|_| malformed("security bits"))?;
        let name_len = r.usize_bounded(256, "name length")?;
        let name_bytes = r
            .data
            .get(r.pos..r.pos + name_len)
            .ok_or_else(|| malformed("truncated preset name"))?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| malformed("preset name is not UTF-8"))?
            .to_string();
        r.pos += name_len;
        r.finish()?;
        let params = CkksParams {
            ring_dim,
            modulus_chain,
            special_prime,
            scale,
            preset_name: (!name.is_empty()).then_some(name),
            security_bits,
        };
        params.validate()?;
        Ok(params)
    }
}

impl BinaryFormat for PublicKey {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectTag::PublicKey);
        let (b, a) = self.parts();
        w.poly(b);
        w.poly(a);
        w.buf
    }

    fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, ObjectTag::PublicKey)?;
        let b = r.poly()?;
        let a = r.poly()?;
        r.finish()?;
        Ok(PublicKey::from_parts(b, a))
    }
}

impl BinaryFormat for SecretKey {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectTag::SecretKey);
        w.poly(self.poly());
        w.buf
    }

    fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, ObjectTag::SecretKey)?;
        let p = r.poly()?;
        r.finish()?;
        Ok(SecretKey::from_poly(p))
    }
}

impl BinaryFormat for EvaluationKeys {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectTag::EvaluationKeys);
        match self.relin_key() {
            Some(k) => {
                w.u64(1);
                w.ksk(k);
            }
            None => w.u64(0),
        }
        w.u64(self.galois_keys().len() as u64);
        for (&step, k) in self.galois_keys() {
            w.u64(step as u64);
            w.ksk(k);
        }
        w.buf
    }

    fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, ObjectTag::EvaluationKeys)?;
        let relin = match r.u64()? {
            0 => None,
            1 => Some(r.ksk()?),
            f => return Err(malformed(format!("relinearization flag {f}"))),
        };
        let count = r.usize_bounded(MAX_DEGREE, "Galois key count")?;
        let mut galois = BTreeMap::new();
        for _ in 0..count {
            let step = r.usize_bounded(MAX_DEGREE, "rotation step")?;
            if galois.insert(step, r.ksk()?).is_some() {
                return Err(malformed(format!("duplicate Galois key for step {step}")));
            }
        }
        r.finish()?;
        Ok(EvaluationKeys::from_parts(relin, galois))
    }
}

impl BinaryFormat for Plaintext {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectTag::Plaintext);
        w.u64(self.level() as u64);
        w.f64(self.scale());
        w.poly(self.poly());
        w.buf
    }

    fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, ObjectTag::Plaintext)?;
        let level = r.usize_bounded(MAX_RESIDUES, "level")?;
        let scale = r.f64()?;
        let poly = r.poly()?;
        r.finish()?;
        Ok(Plaintext::from_parts(poly, scale, level))
    }
}

impl BinaryFormat for Ciphertext {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ObjectTag::Ciphertext);
        w.u64(self.level() as u64);
        w.f64(self.scale());
        w.u64(self.part_count() as u64);
        for p in self.parts() {
            w.poly(p);
        }
        w.buf
    }

    fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::open(data, ObjectTag::Ciphertext)?;
        let level = r.usize_bounded(MAX_RESIDUES, "level")?;
        let scale = r.f64()?;
        let count = r.usize_bounded(3, "part count")?;
        let parts = (0..count).map(|_| r.poly()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Ciphertext::from_parts(parts, scale, level))
    }
}

/// Reads the object tag of an encoded blob without decoding the body.
pub fn peek_tag(data: &[u8]) -> Option<u8> {
    (data.len() >= 7 && &data[..4] == MAGIC).then(|| data[6])
}
