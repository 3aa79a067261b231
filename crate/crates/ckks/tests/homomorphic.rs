use hefuse_ckks::{
    keygen, BinaryFormat, Ciphertext, CkksContext, CkksError, EvaluationKeys, Evaluator, Preset,
    PublicKey, SecretKey, DEFAULT_SCALE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Toy {
    ev: Evaluator,
    sk: SecretKey,
    pk: PublicKey,
    evk: EvaluationKeys,
    rng: ChaCha20Rng,
}

fn toy(steps: &[usize]) -> Toy {
    let ctx = CkksContext::new(Preset::Toy.params()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let (sk, pk, evk) = keygen(&ctx, steps.iter().copied(), &mut rng).unwrap();
    Toy {
        ev: Evaluator::new(ctx),
        sk,
        pk,
        evk,
        rng,
    }
}

impl Toy {
    fn enc(&mut self, v: &[f64]) -> Ciphertext {
        self.ev.encrypt_values(&self.pk, v, &mut self.rng).unwrap()
    }

    fn dec(&self, ct: &Ciphertext) -> Vec<f64> {
        self.ev.decrypt_values(&self.sk, ct).unwrap()
    }

    fn random_vec(&mut self) -> Vec<f64> {
        (0..8).map(|_| self.rng.random_range(-1.0..1.0)).collect()
    }
}

fn max_err(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn encode_decode_round_trip() {
    let t = toy(&[]);
    let ctx = t.ev.context().clone();
    let top = ctx.max_level();
    let v = [1.0, -0.5, 0.25, 0.125, -0.0625, 0.75, -1.0, 0.3];
    let pt = t.ev.encode(&v, DEFAULT_SCALE, top).unwrap();
    assert!(max_err(&t.ev.decode(&pt).unwrap(), &v) < 1e-6);

    let zero = t.ev.encode(&[0.0; 8], DEFAULT_SCALE, top).unwrap();
    assert!(zero.poly().residues().iter().all(|r| r.iter().all(|&c| c == 0)));

    let mut e3 = [0.0; 8];
    e3[3] = 1.0;
    let out = t.ev.decode(&t.ev.encode(&e3, DEFAULT_SCALE, 0).unwrap()).unwrap();
    assert!(max_err(&out, &e3) < 1e-9);
}

#[test]
fn encode_rejects_bad_input() {
    let t = toy(&[]);
    assert!(matches!(
        t.ev.encode(&[0.0; 9], DEFAULT_SCALE, 0),
        Err(CkksError::TooManyValues { len: 9, slots: 8 })
    ));
    assert!(matches!(
        t.ev.encode(&[0.0, f64::NAN], DEFAULT_SCALE, 0),
        Err(CkksError::NonFinite(1))
    ));
    assert!(t.ev.encode(&[0.0], DEFAULT_SCALE, 7).is_err());
}

#[test]
fn encryption_round_trip_and_zero() {
    let mut t = toy(&[]);
    for _ in 0..10 {
        let v = t.random_vec();
        let ct = t.enc(&v);
        assert!(max_err(&t.dec(&ct), &v) < 1e-4);
    }
    let z = t.enc(&[0.0; 8]);
    assert!(max_err(&t.dec(&z), &[0.0; 8]) < 1e-6);
}

#[test]
fn encryption_is_probabilistic() {
    let mut t = toy(&[]);
    let v = t.random_vec();
    let a = t.enc(&v).to_bytes();
    let b = t.enc(&v).to_bytes();
    assert_ne!(a, b);
}

#[test]
fn additive_ops_match_plaintext() {
    let mut t = toy(&[]);
    let (u, v) = (t.random_vec(), t.random_vec());
    let (cu, cv) = (t.enc(&u), t.enc(&v));
    let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
    assert!(max_err(&t.dec(&t.ev.add(&cu, &cv).unwrap()), &sum) < 1e-4);
    assert!(max_err(&t.dec(&t.ev.add(&cv, &cu).unwrap()), &sum) < 1e-4);

    let zero = t.enc(&[0.0; 8]);
    assert!(max_err(&t.dec(&t.ev.add(&cu, &zero).unwrap()), &u) < 1e-4);
    assert!(max_err(&t.dec(&t.ev.sub(&cu, &cu).unwrap()), &[0.0; 8]) < 1e-6);

    let neg: Vec<f64> = u.iter().map(|x| -x).collect();
    assert!(max_err(&t.dec(&t.ev.negate(&cu).unwrap()), &neg) < 1e-4);

    let top = t.ev.context().max_level();
    let pz = t.ev.encode(&[0.0; 8], DEFAULT_SCALE, top).unwrap();
    assert!(max_err(&t.dec(&t.ev.add_plain(&cu, &pz).unwrap()), &u) < 1e-4);
    let pv = t.ev.encode(&v, DEFAULT_SCALE, top).unwrap();
    assert!(max_err(&t.dec(&t.ev.add_plain(&cu, &pv).unwrap()), &sum) < 1e-4);
}

#[test]
fn multiplication_matches_hadamard_product() {
    let mut t = toy(&[]);
    let (u, v) = (t.random_vec(), t.random_vec());
    let (cu, cv) = (t.enc(&u), t.enc(&v));
    let had: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();

    let prod = t.ev.mul(&cu, &cv, &t.evk).unwrap();
    assert_eq!(prod.level(), cu.level() - 1);
    assert_eq!(prod.part_count(), 2);
    assert!(max_err(&t.dec(&prod), &had) < 1e-4);

    let ones = t.enc(&[1.0; 8]);
    assert!(max_err(&t.dec(&t.ev.mul(&cu, &ones, &t.evk).unwrap()), &u) < 1e-4);
    let zero = t.enc(&[0.0; 8]);
    assert!(max_err(&t.dec(&t.ev.mul(&cu, &zero, &t.evk).unwrap()), &[0.0; 8]) < 1e-4);

    let pv = t.ev.encode(&v, DEFAULT_SCALE, cu.level()).unwrap();
    assert!(max_err(&t.dec(&t.ev.mul_plain(&cu, &pv).unwrap()), &had) < 1e-4);
}

#[test]
fn two_multiplicative_levels() {
    let mut t = toy(&[]);
    let (u, v) = (t.random_vec(), t.random_vec());
    let (cu, cv) = (t.enc(&u), t.enc(&v));
    let once = t.ev.mul(&cu, &cv, &t.evk).unwrap();
    let twice = t.ev.mul(&once, &once, &t.evk).unwrap();
    let expect: Vec<f64> = u.iter().zip(&v).map(|(a, b)| (a * b).powi(2)).collect();
    assert_eq!(twice.level(), 0);
    assert!(max_err(&t.dec(&twice), &expect) < 1e-4);
    assert_eq!(t.ev.mul(&twice, &twice, &t.evk), Err(CkksError::NoLevelLeft));
}

#[test]
fn scale_and_level_bookkeeping() {
    let mut t = toy(&[1]);
    let ctx = t.ev.context().clone();
    let top = ctx.max_level();
    let chain = ctx.params().modulus_chain.clone();
    let a = t.enc(&[0.5]);
    assert_eq!((a.level(), a.scale()), (top, DEFAULT_SCALE));

    let sum = t.ev.add(&a, &a).unwrap();
    assert_eq!((sum.level(), sum.scale()), (top, DEFAULT_SCALE));

    let tensor = t.ev.multiply(&a, &a).unwrap();
    assert_eq!((tensor.part_count(), tensor.scale()), (3, DEFAULT_SCALE * DEFAULT_SCALE));
    assert_eq!(t.ev.decrypt(&t.sk, &tensor), Err(CkksError::NotRelinearized(3)));

    let prod = t.ev.mul(&a, &a, &t.evk).unwrap();
    assert_eq!(prod.level(), top - 1);
    assert_eq!(prod.scale(), DEFAULT_SCALE * DEFAULT_SCALE / chain[top] as f64);

    let rot = t.ev.rotate(&prod, 1, &t.evk).unwrap();
    assert_eq!((rot.level(), rot.scale()), (prod.level(), prod.scale()));

    assert!(matches!(t.ev.add(&a, &prod), Err(CkksError::LevelMismatch(_, _))));
    let dropped = t.ev.drop_to_level(&a, top - 1).unwrap();
    assert!(matches!(t.ev.add(&dropped, &prod), Err(CkksError::ScaleMismatch(_, _))));
}

#[test]
fn rotation_is_a_left_cyclic_shift() {
    let mut t = toy(&[1, 2, 4, 7]);
    let v = [1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0];
    let ct = t.enc(&v);
    let r1 = t.dec(&t.ev.rotate(&ct, 1, &t.evk).unwrap());
    assert!(max_err(&r1, &[2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 1.0]) < 1e-4);

    let r0 = t.dec(&t.ev.rotate(&ct, 0, &t.evk).unwrap());
    assert!(max_err(&r0, &v) < 1e-4);

    let back = t.ev.rotate(&t.ev.rotate(&ct, 1, &t.evk).unwrap(), 7, &t.evk).unwrap();
    assert!(max_err(&t.dec(&back), &v) < 1e-4);
    let right = t.dec(&t.ev.rotate(&ct, -1, &t.evk).unwrap());
    assert!(max_err(&right, &[0.0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0]) < 1e-4);

    assert_eq!(t.ev.rotate(&ct, 3, &t.evk), Err(CkksError::MissingGaloisKey(3)));
}

#[test]
fn rotation_preserves_slot_multiset() {
    let mut t = toy(&[1, 2, 4]);
    let v = t.random_vec();
    let ct = t.enc(&v);
    for step in [1, 2, 4] {
        let mut out = t.dec(&t.ev.rotate(&ct, step, &t.evk).unwrap());
        let mut expect = v.clone();
        out.sort_by(f64::total_cmp);
        expect.sort_by(f64::total_cmp);
        assert!(max_err(&out, &expect) < 1e-4);
    }
}

#[test]
fn keygen_covers_exactly_the_requested_steps() {
    let t = toy(&[1, 2, 4]);
    assert_eq!(t.evk.galois_key_count(), 3);
    assert_eq!(t.evk.rotation_steps().collect::<Vec<_>>(), vec![1, 2, 4]);

    let ctx = t.ev.context();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    assert!(keygen(ctx, [0], &mut rng).is_err());
    assert!(keygen(ctx, [8], &mut rng).is_err());
}

#[test]
fn serialization_is_deterministic_and_validated() {
    let mut t = toy(&[1]);
    let ct = t.enc(&[0.25, 0.5]);
    let bytes = ct.to_bytes();
    assert_eq!(&bytes[..4], b"AFHE");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(bytes[6], 0x05);
    let back = Ciphertext::from_bytes(&bytes).unwrap();
    assert_eq!(back, ct);
    assert_eq!(back.to_bytes(), bytes);
    t.ev.context().validate_ciphertext(&back).unwrap();

    let evk = EvaluationKeys::from_bytes(&t.evk.to_bytes()).unwrap();
    assert_eq!(evk, t.evk);
    let pk = PublicKey::from_bytes(&t.pk.to_bytes()).unwrap();
    assert_eq!(pk, t.pk);
    let params = t.ev.context().params().clone();
    assert_eq!(hefuse_ckks::CkksParams::from_bytes(&params.to_bytes()).unwrap(), params);

    assert!(Ciphertext::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut wrong_tag = bytes.clone();
    wrong_tag[6] = 0x04;
    assert!(Ciphertext::from_bytes(&wrong_tag).is_err());
}

#[test]
fn default_preset_round_trip() {
    let ctx = CkksContext::new(Preset::Pn12Qp109.params()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (sk, pk, evk) = keygen(&ctx, [1, 512], &mut rng).unwrap();
    let ev = Evaluator::new(ctx);
    let u: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cu = ev.encrypt_values(&pk, &u, &mut rng).unwrap();
    let cv = ev.encrypt_values(&pk, &v, &mut rng).unwrap();

    let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
    assert!(max_err(&ev.decrypt_values(&sk, &ev.add(&cu, &cv).unwrap()).unwrap(), &sum) < 1e-4);
    let had: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
    let prod = ev.mul(&cu, &cv, &evk).unwrap();
    assert!(max_err(&ev.decrypt_values(&sk, &prod).unwrap(), &had) < 1e-3);

    let rot = ev.decrypt_values(&sk, &ev.rotate(&cu, 512, &evk).unwrap()).unwrap();
    let expect: Vec<f64> = (0..2048).map(|i| u[(i + 512) % 2048]).collect();
    assert!(max_err(&rot, &expect) < 1e-4);
}
