//! Encoding, encryption and the homomorphic operation set.
//!
//! Operations are pure: inputs are borrowed, results are fresh values. The
//! evaluator only keeps atomic operation counters so callers can audit how
//! many expensive primitives a computation used.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::ciphertext::{Ciphertext, Plaintext};
use crate::error::{CkksError, Result};
use crate::keys::{EvaluationKeys, KeySwitchKey, PublicKey, SecretKey};
use crate::params::CkksContext;
use crate::poly::RnsPoly;

/// Relative tolerance when comparing two tracked scales.
const SCALE_TOLERANCE: f64 = 1e-9;

/// Snapshot of how many times each primitive ran.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub encode: u64,
    pub decode: u64,
    pub encrypt: u64,
    pub decrypt: u64,
    pub add: u64,
    pub add_plain: u64,
    pub negate: u64,
    pub mul: u64,
    pub mul_plain: u64,
    pub relinearize: u64,
    pub rescale: u64,
    pub rotate: u64,
}

impl OpCounts {
    /// Homomorphic evaluation ops (excludes encode/encrypt/decrypt/decode).
    /// `mul` counts tensor products; the relinearize and rescale inside a
    /// full `mul` are reported separately.
    pub fn homomorphic_ops(&self) -> u64 {
        self.add + self.add_plain + self.negate + self.mul + self.mul_plain + self.rotate
    }
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: Self) -> Self {
        OpCounts {
            encode: self.encode - rhs.encode,
            decode: self.decode - rhs.decode,
            encrypt: self.encrypt - rhs.encrypt,
            decrypt: self.decrypt - rhs.decrypt,
            add: self.add - rhs.add,
            add_plain: self.add_plain - rhs.add_plain,
            negate: self.negate - rhs.negate,
            mul: self.mul - rhs.mul,
            mul_plain: self.mul_plain - rhs.mul_plain,
            relinearize: self.relinearize - rhs.relinearize,
            rescale: self.rescale - rhs.rescale,
            rotate: self.rotate - rhs.rotate,
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    encode: AtomicU64,
    decode: AtomicU64,
    encrypt: AtomicU64,
    decrypt: AtomicU64,
    add: AtomicU64,
    add_plain: AtomicU64,
    negate: AtomicU64,
    mul: AtomicU64,
    mul_plain: AtomicU64,
    relinearize: AtomicU64,
    rescale: AtomicU64,
    rotate: AtomicU64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

#[derive(Debug)]
pub struct Evaluator {
    ctx: Arc<CkksContext>,
    counters: Counters,
}

impl Evaluator {
    pub fn new(ctx: Arc<CkksContext>) -> Self {
        Self {
            ctx,
            counters: Counters::default(),
        }
    }

    pub fn context(&self) -> &Arc<CkksContext> {
        &self.ctx
    }

    pub fn counts(&self) -> OpCounts {
        let c = &self.counters;
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        OpCounts {
            encode: get(&c.encode),
            decode: get(&c.decode),
            encrypt: get(&c.encrypt),
            decrypt: get(&c.decrypt),
            add: get(&c.add),
            add_plain: get(&c.add_plain),
            negate: get(&c.negate),
            mul: get(&c.mul),
            mul_plain: get(&c.mul_plain),
            relinearize: get(&c.relinearize),
            rescale: get(&c.rescale),
            rotate: get(&c.rotate),
        }
    }

    // ---- encoding ----

    /// Encodes real slot values (zero-padded to N/2) at `scale` and `level`.
    pub fn encode(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext> {
        let ctx = &*self.ctx;
        let slots = ctx.slot_count();
        if values.len() > slots {
            return Err(CkksError::TooManyValues {
                len: values.len(),
                slots,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CkksError::NonFinite(i));
        }
        if level > ctx.max_level() {
            return Err(CkksError::LevelOutOfRange {
                level,
                top: ctx.max_level(),
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(CkksError::Malformed(format!("invalid scale {scale}")));
        }
        bump(&self.counters.encode);
        let coeffs = ctx.encoding().slots_to_coeffs(values);
        let mut ints = Vec::with_capacity(coeffs.len());
        for c in coeffs {
            let v = (c * scale).round();
            if v.abs() >= 9.2e18 {
                return Err(CkksError::ScaleOverflow);
            }
            ints.push(v as i64);
        }
        let idx = ctx.level_indices(level);
        Ok(Plaintext {
            poly: ctx.small_ntt(&ints, &idx),
            scale,
            level,
        })
    }

    /// Decodes the real parts of all N/2 slots.
    pub fn decode(&self, pt: &Plaintext) -> Result<Vec<f64>> {
        let ctx = &*self.ctx;
        ctx.validate_plaintext(pt)?;
        bump(&self.counters.decode);
        let idx = ctx.level_indices(pt.level);
        let mut poly = pt.poly.clone();
        ctx.inverse_ntt(&mut poly, &idx);
        let coeffs = crt_compose_centered(ctx, &poly, pt.level);
        let unscaled: Vec<f64> = coeffs.into_iter().map(|c| c / pt.scale).collect();
        Ok(ctx.encoding().coeffs_to_slots(&unscaled))
    }

    // ---- encryption ----

    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        pk: &PublicKey,
        pt: &Plaintext,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let ctx = &*self.ctx;
        ctx.validate_plaintext(pt)?;
        bump(&self.counters.encrypt);
        let idx = ctx.level_indices(pt.level);
        let moduli = ctx.moduli(&idx);
        let count = idx.len();
        let u = ctx.small_ntt(&ctx.sample_ternary(rng), &idx);
        let mut c0 = ctx.small_ntt(&ctx.sample_gaussian(rng), &idx);
        let mut c1 = ctx.small_ntt(&ctx.sample_gaussian(rng), &idx);
        c0.mul_add_assign(&pk.b.truncated(count), &u, &moduli);
        c0.add_assign(&pt.poly, &moduli);
        c1.mul_add_assign(&pk.a.truncated(count), &u, &moduli);
        Ok(Ciphertext {
            parts: vec![c0, c1],
            scale: pt.scale,
            level: pt.level,
        })
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext> {
        let ctx = &*self.ctx;
        ctx.validate_ciphertext(ct)?;
        if ct.parts.len() != 2 {
            return Err(CkksError::NotRelinearized(ct.parts.len()));
        }
        bump(&self.counters.decrypt);
        let idx = ctx.level_indices(ct.level);
        let moduli = ctx.moduli(&idx);
        let mut m = ct.parts[0].clone();
        m.mul_add_assign(&ct.parts[1], &sk.poly.truncated(idx.len()), &moduli);
        Ok(Plaintext {
            poly: m,
            scale: ct.scale,
            level: ct.level,
        })
    }

    /// Encode then encrypt at the top level with the default scale.
    pub fn encrypt_values<R: Rng + ?Sized>(
        &self,
        pk: &PublicKey,
        values: &[f64],
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let params = self.ctx.params();
        let pt = self.encode(values, params.scale, params.max_level())?;
        self.encrypt(pk, &pt, rng)
    }

    pub fn decrypt_values(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<f64>> {
        self.decode(&self.decrypt(sk, ct)?)
    }

    // ---- additive ops ----

    fn check_same(&self, a_level: usize, a_scale: f64, b_level: usize, b_scale: f64) -> Result<()> {
        if a_level != b_level {
            return Err(CkksError::LevelMismatch(a_level, b_level));
        }
        if ((a_scale - b_scale) / a_scale).abs() > SCALE_TOLERANCE {
            return Err(CkksError::ScaleMismatch(a_scale, b_scale));
        }
        Ok(())
    }

    fn combine(&self, a: &Ciphertext, b: &Ciphertext, subtract: bool) -> Result<Ciphertext> {
        self.check_same(a.level, a.scale, b.level, b.scale)?;
        if a.parts.len() != b.parts.len() {
            return Err(CkksError::NotRelinearized(a.parts.len().max(b.parts.len())));
        }
        bump(&self.counters.add);
        let moduli = self.ctx.moduli(&self.ctx.level_indices(a.level));
        let parts = a
            .parts
            .iter()
            .zip(&b.parts)
            .map(|(x, y)| {
                let mut r = x.clone();
                if subtract {
                    r.sub_assign(y, &moduli);
                } else {
                    r.add_assign(y, &moduli);
                }
                r
            })
            .collect();
        Ok(Ciphertext {
            parts,
            scale: a.scale,
            level: a.level,
        })
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.combine(a, b, false)
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.combine(a, b, true)
    }

    pub fn negate(&self, a: &Ciphertext) -> Result<Ciphertext> {
        bump(&self.counters.negate);
        let moduli = self.ctx.moduli(&self.ctx.level_indices(a.level));
        let mut out = a.clone();
        for p in &mut out.parts {
            p.negate(&moduli);
        }
        Ok(out)
    }

    pub fn add_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        self.check_same(a.level, a.scale, pt.level, pt.scale)?;
        bump(&self.counters.add_plain);
        let moduli = self.ctx.moduli(&self.ctx.level_indices(a.level));
        let mut out = a.clone();
        out.parts[0].add_assign(&pt.poly, &moduli);
        Ok(out)
    }

    // ---- multiplicative ops ----

    /// Tensor product without relinearization or rescaling: three parts,
    /// scale is the product of the input scales.
    pub fn multiply(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        if a.level != b.level {
            return Err(CkksError::LevelMismatch(a.level, b.level));
        }
        if a.parts.len() != 2 || b.parts.len() != 2 {
            return Err(CkksError::NotRelinearized(a.parts.len().max(b.parts.len())));
        }
        bump(&self.counters.mul);
        let moduli = self.ctx.moduli(&self.ctx.level_indices(a.level));
        let d0 = a.parts[0].mul(&b.parts[0], &moduli);
        let mut d1 = a.parts[0].mul(&b.parts[1], &moduli);
        d1.mul_add_assign(&a.parts[1], &b.parts[0], &moduli);
        let d2 = a.parts[1].mul(&b.parts[1], &moduli);
        Ok(Ciphertext {
            parts: vec![d0, d1, d2],
            scale: a.scale * b.scale,
            level: a.level,
        })
    }

    pub fn relinearize(&self, ct: &Ciphertext, evk: &EvaluationKeys) -> Result<Ciphertext> {
        match ct.parts.len() {
            2 => return Ok(ct.clone()),
            3 => {}
            n => return Err(CkksError::Malformed(format!("{n} ciphertext parts"))),
        }
        let key = evk.relin.as_ref().ok_or(CkksError::MissingRelinKey)?;
        bump(&self.counters.relinearize);
        let (k0, k1) = self.key_switch(&ct.parts[2], key, ct.level);
        let moduli = self.ctx.moduli(&self.ctx.level_indices(ct.level));
        let mut c0 = ct.parts[0].clone();
        let mut c1 = ct.parts[1].clone();
        c0.add_assign(&k0, &moduli);
        c1.add_assign(&k1, &moduli);
        Ok(Ciphertext {
            parts: vec![c0, c1],
            scale: ct.scale,
            level: ct.level,
        })
    }

    /// Divides by the top prime of the current level, dropping one level.
    pub fn rescale(&self, ct: &Ciphertext) -> Result<Ciphertext> {
        if ct.level == 0 {
            return Err(CkksError::NoLevelLeft);
        }
        bump(&self.counters.rescale);
        let ctx = &*self.ctx;
        let top = ct.level;
        let lower = ctx.level_indices(top - 1);
        let q_top = ctx.modulus(top).value();
        let parts = ct
            .parts
            .iter()
            .map(|p| {
                let mut last = p.residues[top].clone();
                ctx.table(top).inverse(&mut last);
                let lifted = ctx.switch_residue(&last, top, &lower);
                let residues = lower
                    .iter()
                    .map(|&j| {
                        let m = ctx.modulus(j);
                        let inv = ctx.q_inv_mod_q[top][j];
                        p.residues[j]
                            .iter()
                            .zip(&lifted.residues[j])
                            .map(|(&c, &r)| m.mul(m.sub(c, r), inv))
                            .collect()
                    })
                    .collect();
                RnsPoly::from_residues(residues)
            })
            .collect();
        Ok(Ciphertext {
            parts,
            scale: ct.scale / q_top as f64,
            level: top - 1,
        })
    }

    /// `rescale(relinearize(a * b))`.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext, evk: &EvaluationKeys) -> Result<Ciphertext> {
        if a.level == 0 || b.level == 0 {
            return Err(CkksError::NoLevelLeft);
        }
        if !evk.has_relin() {
            return Err(CkksError::MissingRelinKey);
        }
        let product = self.multiply(a, b)?;
        let relin = self.relinearize(&product, evk)?;
        self.rescale(&relin)
    }

    /// Ciphertext-plaintext product followed by a rescale.
    pub fn mul_plain(&self, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        if a.level != pt.level {
            return Err(CkksError::LevelMismatch(a.level, pt.level));
        }
        if a.level == 0 {
            return Err(CkksError::NoLevelLeft);
        }
        bump(&self.counters.mul_plain);
        let moduli = self.ctx.moduli(&self.ctx.level_indices(a.level));
        let product = Ciphertext {
            parts: a.parts.iter().map(|p| p.mul(&pt.poly, &moduli)).collect(),
            scale: a.scale * pt.scale,
            level: a.level,
        };
        self.rescale(&product)
    }

    /// Drops primes without touching the scale.
    pub fn drop_to_level(&self, ct: &Ciphertext, level: usize) -> Result<Ciphertext> {
        if level > ct.level {
            return Err(CkksError::LevelMismatch(ct.level, level));
        }
        Ok(Ciphertext {
            parts: ct.parts.iter().map(|p| p.truncated(level + 1)).collect(),
            scale: ct.scale,
            level,
        })
    }

    // ---- rotations ----

    /// Left cyclic rotation of the slots by `step` (negative steps rotate
    /// right). Step 0 is the identity and needs no key.
    pub fn rotate(&self, ct: &Ciphertext, step: i64, evk: &EvaluationKeys) -> Result<Ciphertext> {
        let k = self.ctx.normalize_step(step);
        if k == 0 {
            return Ok(ct.clone());
        }
        if ct.parts.len() != 2 {
            return Err(CkksError::NotRelinearized(ct.parts.len()));
        }
        let key = evk.galois.get(&k).ok_or(CkksError::MissingGaloisKey(k))?;
        bump(&self.counters.rotate);
        let perm = self.ctx.galois_permutation(self.ctx.galois_element(k));
        let mut c0 = ct.parts[0].permuted(&perm);
        let c1 = ct.parts[1].permuted(&perm);
        let (k0, k1) = self.key_switch(&c1, key, ct.level);
        let moduli = self.ctx.moduli(&self.ctx.level_indices(ct.level));
        c0.add_assign(&k0, &moduli);
        Ok(Ciphertext {
            parts: vec![c0, k1],
            scale: ct.scale,
            level: ct.level,
        })
    }

    /// Hybrid key switch of `c` (NTT form, decrypting under `s'`) to a pair
    /// decrypting under `s`: digit decomposition over the chain primes,
    /// accumulation modulo `Q_l * P`, then exact division by `P`.
    fn key_switch(&self, c: &RnsPoly, key: &KeySwitchKey, level: usize) -> (RnsPoly, RnsPoly) {
        let ctx = &*self.ctx;
        let lvl = ctx.level_indices(level);
        let ext = ctx.extended_indices(level);
        let ext_moduli = ctx.moduli(&ext);
        // Key residue index for each extended position.
        let key_pos: Vec<usize> = (0..=level).chain(std::iter::once(ctx.special_index())).collect();
        let n = ctx.ring_dim();

        let mut coeffs = c.clone();
        ctx.inverse_ntt(&mut coeffs, &lvl);

        let mut acc0 = RnsPoly::zero(ext.len(), n);
        let mut acc1 = RnsPoly::zero(ext.len(), n);
        for (i, (kb, ka)) in key.digits.iter().enumerate().take(level + 1) {
            let digit = ctx.switch_residue(&coeffs.residues[i], i, &ext);
            for (t, m) in ext_moduli.iter().enumerate() {
                let d = &digit.residues[t];
                let b = &kb.residues[key_pos[t]];
                let a = &ka.residues[key_pos[t]];
                for (((r0, r1), &x), (&y0, &y1)) in acc0.residues[t]
                    .iter_mut()
                    .zip(acc1.residues[t].iter_mut())
                    .zip(d)
                    .zip(b.iter().zip(a))
                {
                    *r0 = m.add(*r0, m.mul(x, y0));
                    *r1 = m.add(*r1, m.mul(x, y1));
                }
            }
        }
        (self.mod_down(acc0, level), self.mod_down(acc1, level))
    }

    /// `round(x / P)` for `x` given modulo `Q_l * P`.
    fn mod_down(&self, mut acc: RnsPoly, level: usize) -> RnsPoly {
        let ctx = &*self.ctx;
        let lvl = ctx.level_indices(level);
        let mut special = acc.residues.pop().expect("special residue present");
        ctx.table(ctx.special_index()).inverse(&mut special);
        let lifted = ctx.switch_residue(&special, ctx.special_index(), &lvl);
        for (j, r) in acc.residues.iter_mut().enumerate() {
            let m = ctx.modulus(j);
            let inv = ctx.p_inv_mod_q[j];
            for (x, &l) in r.iter_mut().zip(&lifted.residues[j]) {
                *x = m.mul(m.sub(*x, l), inv);
            }
        }
        acc
    }
}

/// Centered CRT reconstruction to floats via balanced mixed-radix digits.
/// Exact for values far below `Q_l / 2`, which is where decoded messages live.
fn crt_compose_centered(ctx: &CkksContext, poly: &RnsPoly, level: usize) -> Vec<f64> {
    let n = ctx.ring_dim();
    let moduli: Vec<_> = (0..=level).map(|i| *ctx.modulus(i)).collect();
    if level == 0 {
        return poly.residues[0]
            .iter()
            .map(|&c| moduli[0].center(c) as f64)
            .collect();
    }
    // inv[i][j] = q_j^-1 mod q_i for j < i
    let inv: Vec<Vec<u64>> = (0..=level)
        .map(|i| {
            (0..i)
                .map(|j| moduli[i].inv(moduli[j].value()).expect("distinct primes"))
                .collect()
        })
        .collect();
    let mut out = vec![0.0; n];
    let mut digits = vec![0i64; level + 1];
    for (k, slot) in out.iter_mut().enumerate() {
        for i in 0..=level {
            let m = &moduli[i];
            let mut t = poly.residues[i][k];
            for j in 0..i {
                t = m.mul(m.sub(t, m.reduce_i64(digits[j])), inv[i][j]);
            }
            digits[i] = m.center(t);
        }
        *slot = digits
            .iter()
            .zip(&ctx.chain_products)
            .map(|(&d, &p)| d as f64 * p)
            .sum();
    }
    out
}
