//! A self-contained leveled CKKS implementation.
//!
//! Polynomials live in residue form over a chain of NTT-friendly word-size
//! primes `q_0..q_L`. Multiplication relinearizes and rescales by one prime;
//! rotations use Galois keys. Key switching is hybrid: digits are the chain
//! residues and an auxiliary prime `P` absorbs the digit noise.
//!
//! ```
//! use hefuse_ckks::{keygen, CkksContext, Evaluator, Preset};
//! use rand::SeedableRng;
//!
//! let ctx = CkksContext::new(Preset::Toy.params()).unwrap();
//! let mut rng = rand::rngs::StdRng::seed_from_u64(1);
//! let (sk, pk, evk) = keygen(&ctx, [1], &mut rng).unwrap();
//! let ev = Evaluator::new(ctx);
//! let ct = ev.encrypt_values(&pk, &[1.0, 2.0, 3.0], &mut rng).unwrap();
//! let rotated = ev.rotate(&ct, 1, &evk).unwrap();
//! let out = ev.decrypt_values(&sk, &rotated).unwrap();
//! assert!((out[0] - 2.0).abs() < 1e-6);
//! ```

pub mod arith;
mod ciphertext;
mod encoding;
mod error;
mod evaluator;
mod keys;
pub mod linops;
mod ntt;
mod params;
mod poly;
pub mod serialize;

pub use ciphertext::{Ciphertext, Plaintext};
pub use error::{CkksError, Result};
pub use evaluator::{Evaluator, OpCounts};
pub use keys::{keygen, power_of_two_steps, EvaluationKeys, KeySwitchKey, PublicKey, SecretKey};
pub use linops::PackedLayout;
pub use params::{CkksContext, CkksParams, Preset, DEFAULT_SCALE, MAX_RING_DIM};
pub use poly::{RnsPoly, ERROR_STD_DEV};
pub use serialize::BinaryFormat;
