use hefuse_ckks::linops::{accumulate_score, block_align, inner_product, realign, rotate_and_sum};
use hefuse_ckks::{keygen, CkksContext, CkksError, Evaluator, PackedLayout, Preset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn toy_setup(
    seed: u64,
) -> (
    Evaluator,
    hefuse_ckks::SecretKey,
    hefuse_ckks::PublicKey,
    hefuse_ckks::EvaluationKeys,
    PackedLayout,
    ChaCha20Rng,
) {
    let ctx = CkksContext::new(Preset::Toy.params()).unwrap();
    let layout = PackedLayout::new(4, 2, ctx.slot_count()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sk, pk, evk) = keygen(&ctx, layout.required_rotation_steps(), &mut rng).unwrap();
    (Evaluator::new(ctx), sk, pk, evk, layout, rng)
}

#[test]
fn layout_geometry() {
    let layout = PackedLayout::new(512, 2, 2048).unwrap();
    assert_eq!(layout.block_range(1), 0..512);
    assert_eq!(layout.block_range(2), 512..1024);
    assert_eq!(layout.shift_between(1, 2), 512);
    assert_eq!(layout.shift_between(2, 1), 1536);
    assert_eq!(layout.alignment_steps(), vec![512, 1536]);
    assert_eq!(layout.required_rotation_steps().len(), 12);
    assert!(PackedLayout::new(1025, 2, 2048).is_err());
    assert!(PackedLayout::new(0, 2, 2048).is_err());
}

#[test]
fn inner_product_fills_every_slot() {
    let (ev, sk, pk, evk, _, mut rng) = toy_setup(1);
    let a = ev.encrypt_values(&pk, &[1.0, 2.0, 3.0, 4.0], &mut rng).unwrap();
    let b = ev.encrypt_values(&pk, &[4.0, 3.0, 2.0, 1.0], &mut rng).unwrap();
    let out = ev.decrypt_values(&sk, &inner_product(&ev, &a, &b, &evk).unwrap()).unwrap();
    for v in out {
        assert!((v - 20.0).abs() < 1e-3, "{v}");
    }
}

#[test]
fn inner_product_of_unit_vectors() {
    let (ev, sk, pk, evk, _, mut rng) = toy_setup(2);
    let h = 0.5f64;
    let a = ev.encrypt_values(&pk, &[h, h, h, h], &mut rng).unwrap();
    let b = ev.encrypt_values(&pk, &[h, h, h, h], &mut rng).unwrap();
    let c = ev.encrypt_values(&pk, &[h, -h, h, -h], &mut rng).unwrap();
    let ab = ev.decrypt_values(&sk, &inner_product(&ev, &a, &b, &evk).unwrap()).unwrap()[0];
    let ac = ev.decrypt_values(&sk, &inner_product(&ev, &a, &c, &evk).unwrap()).unwrap()[0];
    assert!((ab - 1.0).abs() < 1e-4);
    assert!(ac.abs() < 1e-4);
}

#[test]
fn rotate_and_sum_totals_all_slots() {
    let (ev, sk, pk, evk, _, mut rng) = toy_setup(3);
    let v = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
    let ct = ev.encrypt_values(&pk, &v, &mut rng).unwrap();
    let out = ev.decrypt_values(&sk, &rotate_and_sum(&ev, &ct, &evk).unwrap()).unwrap();
    assert!(out.iter().all(|x| (x - 3.6).abs() < 1e-4));
}

#[test]
fn zero_padding_isolates_blocks() {
    let (ev, sk, pk, evk, _, mut rng) = toy_setup(4);
    let reference = ev
        .encrypt_values(&pk, &[0.5, 0.5, 0.5, 0.5, 0.9, -0.9, 0.9, -0.9], &mut rng)
        .unwrap();
    let query = ev.encrypt_values(&pk, &[0.5, 0.5, 0.5, 0.5], &mut rng).unwrap();
    let ip = ev.decrypt_values(&sk, &inner_product(&ev, &reference, &query, &evk).unwrap()).unwrap();
    assert!((ip[0] - 1.0).abs() < 1e-4);
}

#[test]
fn block_align_moves_stage_block_to_front() {
    let (ev, sk, pk, evk, layout, mut rng) = toy_setup(5);
    let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let reference = ev.encrypt_values(&pk, &v, &mut rng).unwrap();

    let first = ev.decrypt_values(&sk, &block_align(&ev, &reference, 1, &layout, &evk).unwrap()).unwrap();
    assert!(first.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-4));

    let second = ev.decrypt_values(&sk, &block_align(&ev, &reference, 2, &layout, &evk).unwrap()).unwrap();
    let expect = [5.0, 6.0, 7.0, 8.0, 1.0, 2.0, 3.0, 4.0];
    assert!(second.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-4));

    let aligned = block_align(&ev, &reference, 2, &layout, &evk).unwrap();
    let back = ev.decrypt_values(&sk, &realign(&ev, &aligned, 2, 1, &layout, &evk).unwrap()).unwrap();
    assert!(back.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-4));

    assert!(matches!(
        block_align(&ev, &reference, 3, &layout, &evk),
        Err(CkksError::InvalidParams(_))
    ));
}

#[test]
fn accumulated_score_is_the_sum_of_stage_products() {
    let (ev, sk, pk, evk, layout, mut rng) = toy_setup(6);
    let reference = ev
        .encrypt_values(&pk, &[0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5], &mut rng)
        .unwrap();
    let q1 = ev.encrypt_values(&pk, &[0.5, 0.5, 0.5, 0.5], &mut rng).unwrap();
    let q2 = ev.encrypt_values(&pk, &[0.5, -0.5, -0.5, 0.5], &mut rng).unwrap();

    let ip1 = inner_product(&ev, &reference, &q1, &evk).unwrap();
    let delta = accumulate_score(&ev, None, &ip1).unwrap();
    assert!((ev.decrypt_values(&sk, &delta).unwrap()[0] - 1.0).abs() < 1e-4);

    let aligned = block_align(&ev, &reference, 2, &layout, &evk).unwrap();
    let ip2 = inner_product(&ev, &aligned, &q2, &evk).unwrap();
    let delta = accumulate_score(&ev, Some(&delta), &ip2).unwrap();
    assert!((ev.decrypt_values(&sk, &delta).unwrap()[0] - 1.0).abs() < 1e-4);
}

#[test]
fn missing_galois_key_is_reported() {
    let ctx = CkksContext::new(Preset::Toy.params()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (_, pk, evk) = keygen(&ctx, [1, 2], &mut rng).unwrap();
    let ev = Evaluator::new(ctx);
    let a = ev.encrypt_values(&pk, &[1.0], &mut rng).unwrap();
    assert_eq!(
        inner_product(&ev, &a, &a, &evk).unwrap_err(),
        CkksError::MissingGaloisKey(4)
    );
}

#[test]
fn default_preset_inner_product_costs_one_mul_and_log_slots_rotations() {
    let ctx = CkksContext::new(Preset::Pn12Qp109.params()).unwrap();
    let layout = PackedLayout::new(512, 2, ctx.slot_count()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let (sk, pk, evk) = keygen(&ctx, layout.required_rotation_steps(), &mut rng).unwrap();
    let ev = Evaluator::new(ctx);

    let unit = |rng: &mut ChaCha20Rng| {
        let v: Vec<f64> = (0..512).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let (x, y) = (unit(&mut rng), unit(&mut rng));
    let expect: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let cx = ev.encrypt_values(&pk, &x, &mut rng).unwrap();
    let cy = ev.encrypt_values(&pk, &y, &mut rng).unwrap();

    let before = ev.counts();
    let ip = inner_product(&ev, &cx, &cy, &evk).unwrap();
    let used = ev.counts() - before;
    assert_eq!((used.mul, used.rotate, used.add), (1, 11, 11));

    let got = ev.decrypt_values(&sk, &ip).unwrap()[0];
    assert!((got - expect).abs() < 1e-4, "{got} vs {expect}");
}
