//! Parameter sets and the precomputed evaluation context.

use std::sync::Arc;

use crate::arith::{is_prime, ntt_primes, Modulus};
use crate::encoding::EncodingTables;
use crate::error::{CkksError, Result};
use crate::ntt::NttTable;

/// Default encoding scale, 2^40.
pub const DEFAULT_SCALE: f64 = (1u64 << 40) as f64;
/// Largest ring dimension accepted from parameters, bounding table sizes.
pub const MAX_RING_DIM: usize = 1 << 17;

/// Scheme parameters: ring degree, the ciphertext modulus chain `q_0..q_L`
/// and the auxiliary key-switching prime.
#[derive(Clone, Debug, PartialEq)]
pub struct CkksParams {
    pub ring_dim: usize,
    pub modulus_chain: Vec<u64>,
    pub special_prime: u64,
    pub scale: f64,
    pub preset_name: Option<String>,
    pub security_bits: u32,
}

/// Named parameter presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// N = 16. Insecure, for tests only.
    Toy,
    /// N = 4096, 128-bit.
    Pn12Qp109,
    /// N = 8192, 128-bit.
    Pn13Qp218,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy => "TOY-INSECURE",
            Preset::Pn12Qp109 => "PN12QP109",
            Preset::Pn13Qp218 => "PN13QP218",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "TOY" | "TOY-INSECURE" => Some(Preset::Toy),
            "PN12QP109" => Some(Preset::Pn12Qp109),
            "PN13QP218" => Some(Preset::Pn13Qp218),
            _ => None,
        }
    }

    pub fn params(self) -> CkksParams {
        // (ring dimension, chain prime sizes, special prime size, lambda)
        let (n, chain_bits, special_bits, lambda): (usize, &[u32], u32, u32) = match self {
            Preset::Toy => (16, &[60, 40, 40], 60, 0),
            Preset::Pn12Qp109 => (4096, &[45, 40], 45, 128),
            Preset::Pn13Qp218 => (8192, &[50, 40, 40, 40], 48, 128),
        };
        CkksParams::with_bit_sizes(n, chain_bits, special_bits, DEFAULT_SCALE)
            .expect("preset parameters are valid")
            .named(self.name(), lambda)
    }
}

impl CkksParams {
    /// Builds a chain from prime bit sizes (base prime first).
    pub fn with_bit_sizes(
        ring_dim: usize,
        chain_bits: &[u32],
        special_bits: u32,
        scale: f64,
    ) -> Result<Self> {
        if !ring_dim.is_power_of_two() || ring_dim < 8 {
            return Err(CkksError::InvalidParams(format!(
                "ring dimension {ring_dim} is not a power of two >= 8"
            )));
        }
        if chain_bits.is_empty() {
            return Err(CkksError::InvalidParams("empty modulus chain".into()));
        }
        let mut used = Vec::new();
        for &bits in chain_bits.iter().chain(std::iter::once(&special_bits)) {
            if !(20..=61).contains(&bits) {
                return Err(CkksError::InvalidParams(format!(
                    "prime size {bits} outside [20, 61] bits"
                )));
            }
            let p = ntt_primes(bits, ring_dim, 1, &used)[0];
            used.push(p);
        }
        let special_prime = used.pop().expect("special prime pushed last");
        let params = Self {
            ring_dim,
            modulus_chain: used,
            special_prime,
            scale,
            preset_name: None,
            security_bits: 0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn named(mut self, name: &str, security_bits: u32) -> Self {
        self.preset_name = Some(name.to_string());
        self.security_bits = security_bits;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ring_dim;
        if !n.is_power_of_two() || !(8..=MAX_RING_DIM).contains(&n) {
            return Err(CkksError::InvalidParams(format!(
                "ring dimension {n} is not a power of two in [8, {MAX_RING_DIM}]"
            )));
        }
        if self.modulus_chain.len() < 2 {
            return Err(CkksError::InvalidParams(
                "modulus chain needs a base prime and at least one scaling prime".into(),
            ));
        }
        let all: Vec<u64> = self
            .modulus_chain
            .iter()
            .copied()
            .chain(std::iter::once(self.special_prime))
            .collect();
        for (i, &p) in all.iter().enumerate() {
            if p >= 1 << 62 || !is_prime(p) || p % (2 * n as u64) != 1 {
                return Err(CkksError::InvalidParams(format!(
                    "{p} is not a prime = 1 mod 2N below 2^62"
                )));
            }
            if all[..i].contains(&p) {
                return Err(CkksError::InvalidParams(format!("prime {p} repeated")));
            }
        }
        if !(self.scale.is_finite() && self.scale > 1.0) {
            return Err(CkksError::InvalidParams("scale must be finite and > 1".into()));
        }
        let min_scaling = *self.modulus_chain[1..].iter().min().expect("len >= 2") as f64;
        if self.scale > 2.0 * min_scaling {
            return Err(CkksError::InvalidParams(
                "scale exceeds the smallest scaling prime; rescale cannot absorb a product".into(),
            ));
        }
        if self.scale >= self.modulus_chain[0] as f64 {
            return Err(CkksError::InvalidParams("scale must be below the base prime".into()));
        }
        Ok(())
    }

    pub fn slot_count(&self) -> usize {
        self.ring_dim / 2
    }

    pub fn max_level(&self) -> usize {
        self.modulus_chain.len() - 1
    }

    /// Total bit length of the chain plus the special prime.
    pub fn log_qp(&self) -> u32 {
        self.modulus_chain
            .iter()
            .chain(std::iter::once(&self.special_prime))
            .map(|&p| Modulus::new(p).bits())
            .sum()
    }
}

/// Precomputed tables shared by every operation on one parameter set.
#[derive(Debug)]
pub struct CkksContext {
    params: CkksParams,
    /// NTT tables for `q_0..q_L` followed by the special prime.
    tables: Vec<NttTable>,
    encoding: EncodingTables,
    /// `P mod q_i`.
    pub(crate) p_mod_q: Vec<u64>,
    /// `P^-1 mod q_i`.
    pub(crate) p_inv_mod_q: Vec<u64>,
    /// `q_l^-1 mod q_j` at `[l][j]`, `j < l`.
    pub(crate) q_inv_mod_q: Vec<Vec<u64>>,
    /// Running chain products `q_0 * .. * q_{i-1}` as floats.
    pub(crate) chain_products: Vec<f64>,
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Arc<Self>> {
        params.validate()?;
        let n = params.ring_dim;
        let tables: Vec<NttTable> = params
            .modulus_chain
            .iter()
            .chain(std::iter::once(&params.special_prime))
            .map(|&p| NttTable::new(Modulus::new(p), n))
            .collect();
        let chain: Vec<Modulus> = params.modulus_chain.iter().map(|&p| Modulus::new(p)).collect();
        let p = params.special_prime;
        let p_mod_q: Vec<u64> = chain.iter().map(|m| m.reduce(p)).collect();
        let p_inv_mod_q = chain
            .iter()
            .zip(&p_mod_q)
            .map(|(m, &r)| m.inv(r).expect("distinct primes"))
            .collect();
        let q_inv_mod_q = (0..chain.len())
            .map(|l| {
                (0..l)
                    .map(|j| chain[j].inv(chain[l].value()).expect("distinct primes"))
                    .collect()
            })
            .collect();
        let mut chain_products = Vec::with_capacity(chain.len());
        let mut acc = 1.0f64;
        for m in &chain {
            chain_products.push(acc);
            acc *= m.value() as f64;
        }
        let encoding = EncodingTables::new(n);
        Ok(Arc::new(Self {
            params,
            tables,
            encoding,
            p_mod_q,
            p_inv_mod_q,
            q_inv_mod_q,
            chain_products,
        }))
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn ring_dim(&self) -> usize {
        self.params.ring_dim
    }

    pub fn slot_count(&self) -> usize {
        self.params.slot_count()
    }

    pub fn max_level(&self) -> usize {
        self.params.max_level()
    }

    /// Tables for chain prime `i`; index `max_level + 1` is the special prime.
    pub(crate) fn table(&self, i: usize) -> &NttTable {
        &self.tables[i]
    }

    pub(crate) fn modulus(&self, i: usize) -> &Modulus {
        self.tables[i].modulus()
    }

    pub(crate) fn special_index(&self) -> usize {
        self.params.modulus_chain.len()
    }

    pub(crate) fn encoding(&self) -> &EncodingTables {
        &self.encoding
    }

    /// Galois element realizing a left rotation by `step` slots.
    pub fn galois_element(&self, step: usize) -> usize {
        let two_n = 2 * self.ring_dim();
        let mut g = 1usize;
        for _ in 0..step {
            g = g * 5 % two_n;
        }
        g
    }

    /// Normalizes a signed rotation step into `[0, N/2)`.
    pub fn normalize_step(&self, step: i64) -> usize {
        step.rem_euclid(self.slot_count() as i64) as usize
    }

    /// Permutation of NTT slots implementing `X -> X^g`.
    pub(crate) fn galois_permutation(&self, g: usize) -> Vec<usize> {
        let n = self.ring_dim();
        let two_n = 2 * n;
        let table = &self.tables[0];
        let log_n = n.trailing_zeros();
        (0..n)
            .map(|i| {
                let e = table.eval_exponent(i) * g % two_n;
                crate::ntt::bit_reverse((e - 1) / 2, log_n)
            })
            .collect()
    }
}
