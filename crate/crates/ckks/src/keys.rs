//! Key material and key generation.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{CkksError, Result};
use crate::params::CkksContext;
use crate::poly::RnsPoly;

/// Ternary secret, kept in NTT form over every chain prime and the special
/// prime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    pub(crate) poly: RnsPoly,
}

/// `(b, a)` with `b = -a*s + e` over the full chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
}

/// Hybrid key-switching key: one `(b_i, a_i)` pair per chain prime, each
/// over the chain plus the special prime `P`, with
/// `b_i = -a_i*s + e_i + P*[i-th CRT gadget]*s'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySwitchKey {
    pub(crate) digits: Vec<(RnsPoly, RnsPoly)>,
}

impl KeySwitchKey {
    pub fn digit_count(&self) -> usize {
        self.digits.len()
    }
}

/// Relinearization key plus Galois keys indexed by left-rotation step.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EvaluationKeys {
    pub(crate) relin: Option<KeySwitchKey>,
    pub(crate) galois: BTreeMap<usize, KeySwitchKey>,
}

impl EvaluationKeys {
    pub fn has_relin(&self) -> bool {
        self.relin.is_some()
    }

    pub fn rotation_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.galois.keys().copied()
    }

    pub fn galois_key_count(&self) -> usize {
        self.galois.len()
    }

    pub fn has_step(&self, step: usize) -> bool {
        self.galois.contains_key(&step)
    }
}

impl SecretKey {
    pub fn generate<R: Rng + ?Sized>(ctx: &CkksContext, rng: &mut R) -> Self {
        let coeffs = ctx.sample_ternary(rng);
        let all = ctx.extended_indices(ctx.max_level());
        Self {
            poly: ctx.small_ntt(&coeffs, &all),
        }
    }

    pub fn poly(&self) -> &RnsPoly {
        &self.poly
    }

    pub fn from_poly(poly: RnsPoly) -> Self {
        Self { poly }
    }
}

impl PublicKey {
    pub fn generate<R: Rng + ?Sized>(ctx: &CkksContext, sk: &SecretKey, rng: &mut R) -> Self {
        let idx = ctx.level_indices(ctx.max_level());
        let moduli = ctx.moduli(&idx);
        let a = ctx.sample_uniform(rng, &idx);
        let e = ctx.small_ntt(&ctx.sample_gaussian(rng), &idx);
        let s = sk.poly.truncated(idx.len());
        let mut b = e;
        b.sub_assign(&a.mul(&s, &moduli), &moduli);
        Self { b, a }
    }

    pub fn parts(&self) -> (&RnsPoly, &RnsPoly) {
        (&self.b, &self.a)
    }

    pub fn from_parts(b: RnsPoly, a: RnsPoly) -> Self {
        Self { b, a }
    }
}

impl KeySwitchKey {
    /// Key switching `from` (in NTT form over all primes) to `sk`.
    pub(crate) fn generate<R: Rng + ?Sized>(
        ctx: &CkksContext,
        sk: &SecretKey,
        from: &RnsPoly,
        rng: &mut R,
    ) -> Self {
        let all = ctx.extended_indices(ctx.max_level());
        let moduli = ctx.moduli(&all);
        let digits = (0..=ctx.max_level())
            .map(|i| {
                let a = ctx.sample_uniform(rng, &all);
                let mut b = ctx.small_ntt(&ctx.sample_gaussian(rng), &all);
                b.sub_assign(&a.mul(&sk.poly, &moduli), &moduli);
                let m = moduli[i];
                let p_mod = ctx.p_mod_q[i];
                for (x, &f) in b.residues[i].iter_mut().zip(&from.residues[i]) {
                    *x = m.add(*x, m.mul(p_mod, f));
                }
                (b, a)
            })
            .collect();
        Self { digits }
    }

    pub fn from_digits(digits: Vec<(RnsPoly, RnsPoly)>) -> Self {
        Self { digits }
    }

    pub fn digits(&self) -> &[(RnsPoly, RnsPoly)] {
        &self.digits
    }
}

impl EvaluationKeys {
    pub fn from_parts(relin: Option<KeySwitchKey>, galois: BTreeMap<usize, KeySwitchKey>) -> Self {
        Self { relin, galois }
    }

    pub fn relin_key(&self) -> Option<&KeySwitchKey> {
        self.relin.as_ref()
    }

    pub fn galois_keys(&self) -> &BTreeMap<usize, KeySwitchKey> {
        &self.galois
    }
}

/// Power-of-two rotation steps `1, 2, .., slots/2` used by rotate-and-sum.
pub fn power_of_two_steps(slot_count: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |s| Some(s * 2))
        .take_while(|&s| s < slot_count)
        .collect()
}

/// Generates `(sk, pk, evk)`; `evk` carries a relinearization key and one
/// Galois key per requested step.
pub fn keygen<R: Rng + ?Sized>(
    ctx: &CkksContext,
    rotation_steps: impl IntoIterator<Item = usize>,
    rng: &mut R,
) -> Result<(SecretKey, PublicKey, EvaluationKeys)> {
    let slots = ctx.slot_count();
    let steps: BTreeSet<usize> = rotation_steps.into_iter().collect();
    if let Some(&bad) = steps.iter().find(|&&s| s == 0 || s >= slots) {
        return Err(CkksError::InvalidRotationStep {
            step: bad as i64,
            max: slots - 1,
        });
    }
    let sk = SecretKey::generate(ctx, rng);
    let pk = PublicKey::generate(ctx, &sk, rng);

    let all = ctx.extended_indices(ctx.max_level());
    let moduli = ctx.moduli(&all);
    let s_squared = sk.poly.mul(&sk.poly, &moduli);
    let relin = KeySwitchKey::generate(ctx, &sk, &s_squared, rng);

    let galois = steps
        .into_iter()
        .map(|step| {
            let perm = ctx.galois_permutation(ctx.galois_element(step));
            let rotated_secret = sk.poly.permuted(&perm);
            (step, KeySwitchKey::generate(ctx, &sk, &rotated_secret, rng))
        })
        .collect();

    Ok((
        sk,
        pk,
        EvaluationKeys {
            relin: Some(relin),
            galois,
        },
    ))
}
