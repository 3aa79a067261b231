//! Polynomials in residue (RNS) form.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::arith::Modulus;
use crate::params::CkksContext;

/// Standard deviation of the encryption error.
pub const ERROR_STD_DEV: f64 = 3.2;

/// One polynomial stored as a residue vector per prime. Every polynomial the
/// public API hands out is in NTT (evaluation) form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub(crate) residues: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn zero(count: usize, n: usize) -> Self {
        Self {
            residues: vec![vec![0; n]; count],
        }
    }

    pub fn from_residues(residues: Vec<Vec<u64>>) -> Self {
        Self { residues }
    }

    pub fn residues(&self) -> &[Vec<u64>] {
        &self.residues
    }

    pub fn residue_count(&self) -> usize {
        self.residues.len()
    }

    pub fn degree(&self) -> usize {
        self.residues.first().map_or(0, Vec::len)
    }

    pub(crate) fn truncated(&self, count: usize) -> Self {
        Self {
            residues: self.residues[..count].to_vec(),
        }
    }

    /// Lifts small signed coefficients into residues for the given primes.
    pub(crate) fn from_signed<'a>(
        coeffs: &[i64],
        moduli: impl IntoIterator<Item = &'a Modulus>,
    ) -> Self {
        Self {
            residues: moduli
                .into_iter()
                .map(|m| coeffs.iter().map(|&c| m.reduce_i64(c)).collect())
                .collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Self, moduli: &[&Modulus]) {
        for ((a, b), m) in self.residues.iter_mut().zip(&other.residues).zip(moduli) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = m.add(*x, *y);
            }
        }
    }

    pub(crate) fn sub_assign(&mut self, other: &Self, moduli: &[&Modulus]) {
        for ((a, b), m) in self.residues.iter_mut().zip(&other.residues).zip(moduli) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = m.sub(*x, *y);
            }
        }
    }

    pub(crate) fn negate(&mut self, moduli: &[&Modulus]) {
        for (a, m) in self.residues.iter_mut().zip(moduli) {
            for x in a.iter_mut() {
                *x = m.neg(*x);
            }
        }
    }

    /// Pointwise product; both operands in NTT form.
    pub(crate) fn mul(&self, other: &Self, moduli: &[&Modulus]) -> Self {
        Self {
            residues: self
                .residues
                .iter()
                .zip(&other.residues)
                .zip(moduli)
                .map(|((a, b), m)| a.iter().zip(b).map(|(x, y)| m.mul(*x, *y)).collect())
                .collect(),
        }
    }

    /// `self += a * b` pointwise.
    pub(crate) fn mul_add_assign(&mut self, a: &Self, b: &Self, moduli: &[&Modulus]) {
        for (((acc, x), y), m) in self
            .residues
            .iter_mut()
            .zip(&a.residues)
            .zip(&b.residues)
            .zip(moduli)
        {
            for ((r, u), v) in acc.iter_mut().zip(x).zip(y) {
                *r = m.add(*r, m.mul(*u, *v));
            }
        }
    }

    pub(crate) fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            residues: self
                .residues
                .iter()
                .map(|r| perm.iter().map(|&p| r[p]).collect())
                .collect(),
        }
    }
}

/// Residue-form helpers bound to a context. `indices` select primes by
/// position (chain primes first, then the special prime).
impl CkksContext {
    pub(crate) fn moduli(&self, indices: &[usize]) -> Vec<&Modulus> {
        indices.iter().map(|&i| self.modulus(i)).collect()
    }

    pub(crate) fn level_indices(&self, level: usize) -> Vec<usize> {
        (0..=level).collect()
    }

    pub(crate) fn extended_indices(&self, level: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..=level).collect();
        v.push(self.special_index());
        v
    }

    pub(crate) fn forward_ntt(&self, poly: &mut RnsPoly, indices: &[usize]) {
        for (r, &i) in poly.residues.iter_mut().zip(indices) {
            self.table(i).forward(r);
        }
    }

    pub(crate) fn inverse_ntt(&self, poly: &mut RnsPoly, indices: &[usize]) {
        for (r, &i) in poly.residues.iter_mut().zip(indices) {
            self.table(i).inverse(r);
        }
    }

    pub(crate) fn small_ntt(&self, coeffs: &[i64], indices: &[usize]) -> RnsPoly {
        let mut p = RnsPoly::from_signed(coeffs, self.moduli(indices));
        self.forward_ntt(&mut p, indices);
        p
    }

    pub(crate) fn sample_ternary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.ring_dim()).map(|_| rng.random_range(-1i64..=1)).collect()
    }

    pub(crate) fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let normal = Normal::new(0.0, ERROR_STD_DEV).expect("valid deviation");
        let bound = 6.0 * ERROR_STD_DEV;
        (0..self.ring_dim())
            .map(|_| loop {
                let x: f64 = normal.sample(rng);
                if x.abs() <= bound {
                    break x.round() as i64;
                }
            })
            .collect()
    }

    /// Uniform residues; drawn independently per prime, which is uniform
    /// over the composite modulus by CRT.
    pub(crate) fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, indices: &[usize]) -> RnsPoly {
        RnsPoly {
            residues: indices
                .iter()
                .map(|&i| {
                    let q = self.modulus(i).value();
                    (0..self.ring_dim()).map(|_| rng.random_range(0..q)).collect()
                })
                .collect(),
        }
    }

    /// Re-expresses coefficients known modulo prime `from` (centered) modulo
    /// each prime in `targets`, returned in NTT form.
    pub(crate) fn switch_residue(&self, coeffs: &[u64], from: usize, targets: &[usize]) -> RnsPoly {
        let src = self.modulus(from);
        let mut out = RnsPoly {
            residues: targets
                .iter()
                .map(|&t| {
                    let m = self.modulus(t);
                    coeffs.iter().map(|&c| m.reduce_i64(src.center(c))).collect()
                })
                .collect(),
        };
        self.forward_ntt(&mut out, targets);
        out
    }
}
