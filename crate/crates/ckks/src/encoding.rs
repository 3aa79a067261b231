//! Canonical-embedding encoder.
//!
//! Slot `j` of a plaintext polynomial `m` is `m(zeta^(5^j))` with
//! `zeta = exp(i*pi/N)`. Only the `N/2` slots on the orbit of 5 are stored;
//! the remaining evaluations are their conjugates, which keeps `m` real.
//! Both directions run through an `O(N log N)` butterfly over that orbit.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub(crate) struct EncodingTables {
    slots: usize,
    two_n: usize,
    /// `5^j mod 2N`.
    rot_group: Vec<usize>,
    /// `exp(2*pi*i*k / 2N)` for `k` in `0..=2N`.
    ksi_pows: Vec<Complex64>,
}

impl EncodingTables {
    pub(crate) fn new(ring_dim: usize) -> Self {
        let slots = ring_dim / 2;
        let two_n = 2 * ring_dim;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = g * 5 % two_n;
        }
        let ksi_pows = (0..=two_n)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / two_n as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        Self {
            slots,
            two_n,
            rot_group,
            ksi_pows,
        }
    }

    fn bit_reverse_in_place(vals: &mut [Complex64]) {
        let n = vals.len();
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = crate::ntt::bit_reverse(i, bits);
            if i < j {
                vals.swap(i, j);
            }
        }
    }

    /// Slot values from (already unscaled) coefficient pairs.
    fn special_fft(&self, vals: &mut [Complex64]) {
        let n = vals.len();
        Self::bit_reverse_in_place(vals);
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let quarter_period = len * 4;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let idx = (self.rot_group[j] % quarter_period) * (self.two_n / quarter_period);
                    let u = vals[start + j];
                    let v = vals[start + j + half] * self.ksi_pows[idx];
                    vals[start + j] = u + v;
                    vals[start + j + half] = u - v;
                }
            }
            len <<= 1;
        }
    }

    fn special_ifft(&self, vals: &mut [Complex64]) {
        let n = vals.len();
        let mut len = n;
        while len >= 2 {
            let half = len / 2;
            let quarter_period = len * 4;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let idx = (quarter_period - self.rot_group[j] % quarter_period)
                        * (self.two_n / quarter_period);
                    let u = vals[start + j] + vals[start + j + half];
                    let v = (vals[start + j] - vals[start + j + half]) * self.ksi_pows[idx];
                    vals[start + j] = u;
                    vals[start + j + half] = v;
                }
            }
            len >>= 1;
        }
        Self::bit_reverse_in_place(vals);
        let inv = 1.0 / n as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Real slot values to real polynomial coefficients (unscaled).
    pub(crate) fn slots_to_coeffs(&self, values: &[f64]) -> Vec<f64> {
        let mut vals = vec![Complex64::new(0.0, 0.0); self.slots];
        for (dst, &v) in vals.iter_mut().zip(values) {
            dst.re = v;
        }
        self.special_ifft(&mut vals);
        let mut coeffs = vec![0.0; 2 * self.slots];
        for (i, v) in vals.iter().enumerate() {
            coeffs[i] = v.re;
            coeffs[i + self.slots] = v.im;
        }
        coeffs
    }

    /// Real polynomial coefficients (unscaled) to the real parts of the slots.
    pub(crate) fn coeffs_to_slots(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut vals: Vec<Complex64> = (0..self.slots)
            .map(|i| Complex64::new(coeffs[i], coeffs[i + self.slots]))
            .collect();
        self.special_fft(&mut vals);
        vals.into_iter().map(|v| v.re).collect()
    }
}
