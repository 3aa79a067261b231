use crate::error::{CkksError, Result};
use crate::params::CkksContext;
use crate::poly::RnsPoly;

/// An encoded message: an integer polynomial in NTT form at some level.
#[derive(Clone, Debug, PartialEq)]
pub struct Plaintext {
    pub(crate) poly: RnsPoly,
    pub(crate) scale: f64,
    pub(crate) level: usize,
}

impl Plaintext {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn poly(&self) -> &RnsPoly {
        &self.poly
    }

    pub fn from_parts(poly: RnsPoly, scale: f64, level: usize) -> Self {
        Self { poly, scale, level }
    }
}

/// A ciphertext `(c0, c1[, c2])` decrypting as `c0 + c1*s (+ c2*s^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub(crate) parts: Vec<RnsPoly>,
    pub(crate) scale: f64,
    pub(crate) level: usize,
}

impl Ciphertext {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[RnsPoly] {
        &self.parts
    }

    pub fn from_parts(parts: Vec<RnsPoly>, scale: f64, level: usize) -> Self {
        Self { parts, scale, level }
    }
}

impl CkksContext {
    fn check_poly(&self, poly: &RnsPoly, count: usize) -> Result<()> {
        if poly.residue_count() != count {
            return Err(CkksError::Malformed(format!(
                "expected {count} residues, found {}",
                poly.residue_count()
            )));
        }
        for (i, r) in poly.residues().iter().enumerate() {
            if r.len() != self.ring_dim() {
                return Err(CkksError::Malformed(format!(
                    "residue of degree {} in ring of degree {}",
                    r.len(),
                    self.ring_dim()
                )));
            }
            let q = self.modulus(i).value();
            if r.iter().any(|&c| c >= q) {
                return Err(CkksError::Malformed("coefficient not reduced".into()));
            }
        }
        Ok(())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.max_level() {
            Err(CkksError::LevelOutOfRange {
                level,
                top: self.max_level(),
            })
        } else {
            Ok(())
        }
    }

    fn check_scale(scale: f64) -> Result<()> {
        if scale.is_finite() && scale > 0.0 {
            Ok(())
        } else {
            Err(CkksError::Malformed(format!("invalid scale {scale}")))
        }
    }

    /// Structural validation of a ciphertext from an untrusted source.
    pub fn validate_ciphertext(&self, ct: &Ciphertext) -> Result<()> {
        self.check_level(ct.level)?;
        Self::check_scale(ct.scale)?;
        if !(2..=3).contains(&ct.parts.len()) {
            return Err(CkksError::Malformed(format!("{} ciphertext parts", ct.parts.len())));
        }
        ct.parts.iter().try_for_each(|p| self.check_poly(p, ct.level + 1))
    }

    pub fn validate_plaintext(&self, pt: &Plaintext) -> Result<()> {
        self.check_level(pt.level)?;
        Self::check_scale(pt.scale)?;
        self.check_poly(&pt.poly, pt.level + 1)
    }
}
