//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any line is FAIL.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use common::{near_tie, oracle_cascade};
use hefuse::bench::{BenchConfig, BenchFixture};
use hefuse::biometric::{generate_synthetic_db, mated_and_nonmated_pairs, Modality, ModalityNoise, SubjectRecord, SyntheticConfig};
use hefuse::ckks::linops::inner_product;
use hefuse::ckks::{keygen, power_of_two_steps, BinaryFormat, Ciphertext, CkksContext, Evaluator, PackedLayout, Preset};
use hefuse::keystore::{KeyCache, ReferenceLayout, ServerKeys};
use hefuse::matcher::{EncryptedMatcher, KeyHolder, MatchPolicy, PolicyKind, ProbeQueue, Verdict};
use hefuse::metrics::{eer, saved_presentations, score_deviation, unimodal_scores, CascadeScores};
use hefuse::protocol::wire::{FieldKind, Message};
use hefuse::protocol::{duplex, Client, Clock, ErrorCode, ManualClock, ReferenceStore, Server, ServerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

const ORDER: [Modality; 2] = [Modality::Iris, Modality::Fingerprint];

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: String) -> Check {
    Check { id, pass, detail }
}

fn unit_vector(d: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn homomorphic_correctness() -> Vec<Check> {
    let ctx = CkksContext::new(Preset::Pn12Qp109.params()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1001);
    let (sk, pk, evk) = keygen(&ctx, power_of_two_steps(ctx.slot_count()), &mut rng).unwrap();
    let ev = Evaluator::new(ctx);
    let (mut plain, mut enc) = (Vec::new(), Vec::new());
    for _ in 0..1000 {
        let a = unit_vector(512, &mut rng);
        let b = unit_vector(512, &mut rng);
        plain.push(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>());
        let ca = ev.encrypt_values(&pk, &a, &mut rng).unwrap();
        let cb = ev.encrypt_values(&pk, &b, &mut rng).unwrap();
        let ip = inner_product(&ev, &ca, &cb, &evk).unwrap();
        enc.push(ev.decrypt_values(&sk, &ip).unwrap()[0]);
    }
    let dev = score_deviation(&plain, &enc).unwrap();
    vec![check(
        "1",
        dev.mean < 1e-4 && dev.max < 1e-4,
        format!("1000 pairs d=512 N=4096: mean {:.3e}, max {:.3e}", dev.mean, dev.max),
    )]
}

/// Every (reference subject, probe subject, probe session) combination,
/// references always from session 0.
fn comparisons(db: &[SubjectRecord]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for r in 0..db.len() {
        for p in 0..db.len() {
            for ps in 0..db[p].session_count() {
                if r != p || ps != 0 {
                    out.push((r, p, ps));
                }
            }
        }
    }
    out
}

#[derive(Default)]
struct EquivalenceTally {
    sessions: usize,
    excluded: usize,
    mismatches: usize,
    accept_stage: [usize; 3],
    rejects: usize,
}

fn equivalence_on(preset: Preset, db: &[SubjectRecord], policies: &[MatchPolicy], sessions: usize, seed: u64) -> EquivalenceTally {
    let d = db[0].sample(ORDER[0], 0).unwrap().len();
    let ctx = CkksContext::new(preset.params()).unwrap();
    let layout = PackedLayout::new(d, ORDER.len(), ctx.slot_count()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sk, pk, evk) = keygen(&ctx, layout.required_rotation_steps(), &mut rng).unwrap();
    let ev = Evaluator::new(ctx);
    let matcher = EncryptedMatcher::new(&ev, &pk, &evk, ORDER.to_vec(), d).unwrap();
    let references: Vec<Ciphertext> = db
        .iter()
        .map(|rec| matcher.encrypt_reference(&rec.fused(&ORDER, 0).unwrap(), &mut rng).unwrap())
        .collect();

    let combos = comparisons(db);
    let mut tally = EquivalenceTally::default();
    let mut i = 0usize;
    while tally.sessions < sessions {
        let policy = &policies[i % policies.len()];
        // A prime stride spreads the sessions over the whole combination list.
        let (r, p, ps) = combos[(i * 7919) % combos.len()];
        i += 1;
        tally.sessions += 1;
        let expect = oracle_cascade(&db[r], 0, &db[p], ps, policy);
        if near_tie(&expect, policy, 1e-3) {
            tally.excluded += 1;
            continue;
        }
        let mut judge = KeyHolder {
            evaluator: &ev,
            secret_key: &sk,
            policy,
        };
        let (verdict, stages_used) = if policy.mode == hefuse::FusionMode::UnconditionalAnd {
            let probe = db[p].fused(&ORDER, ps).unwrap();
            let out = matcher
                .verify_unconditional(&references[r], &probe, policy, &mut judge, &mut rng)
                .unwrap();
            (out.verdict, out.stages_used)
        } else {
            let mut queue = ProbeQueue::new(policy.modality_order.iter().map(|&m| db[p].sample(m, ps).unwrap().clone()));
            let out = matcher
                .verify_incremental(&references[r], &mut queue, policy, &mut judge, &mut rng)
                .unwrap();
            (out.verdict, out.stages_used)
        };
        if (verdict, stages_used) != (expect.verdict, expect.stages_used) {
            tally.mismatches += 1;
        }
        match verdict {
            Verdict::Accept => tally.accept_stage[stages_used.min(2)] += 1,
            Verdict::Reject => tally.rejects += 1,
        }
    }
    tally
}

/// Sequential thresholds at `fmr` plus an AND threshold, all calibrated on
/// the population itself.
fn calibrated_policies(db: &[SubjectRecord], fmr: f64) -> Vec<MatchPolicy> {
    let pairs = mated_and_nonmated_pairs(db);
    PolicyKind::ALL
        .iter()
        .map(|&kind| {
            let scores = CascadeScores::compute(db, &pairs, &kind.order()).unwrap();
            hefuse::metrics::calibrate_policy(&scores, kind, fmr).unwrap()
        })
        .collect()
}

fn decision_equivalence() -> Vec<Check> {
    let toy_db = generate_synthetic_db(&SyntheticConfig {
        n_subjects: 8,
        template_len: 4,
        samples_min: 2,
        samples_max: 3,
        modalities: ORDER.iter().map(|&modality| ModalityNoise { modality, sigma: 0.35 }).collect(),
        seed: 2024,
    })
    .unwrap();
    let default_db = generate_synthetic_db(&SyntheticConfig {
        n_subjects: 12,
        samples_min: 2,
        samples_max: 3,
        seed: 2025,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let toy = equivalence_on(Preset::Toy, &toy_db, &calibrated_policies(&toy_db, 0.2), 250, 1);
    let pn12 = equivalence_on(Preset::Pn12Qp109, &default_db, &calibrated_policies(&default_db, 0.05), 250, 2);
    let mismatches = toy.mismatches + pn12.mismatches;
    let describe = |t: &EquivalenceTally| {
        format!(
            "{} sessions, {} near-tie excluded, accept@1 {}, accept@2 {}, reject {}",
            t.sessions,
            t.excluded,
            t.accept_stage[1],
            t.accept_stage[2],
            t.rejects
        )
    };
    vec![check(
        "2",
        mismatches == 0,
        format!("{mismatches} mismatches; toy: {}; PN12QP109: {}", describe(&toy), describe(&pn12)),
    )]
}

fn saved_presentations_trend() -> Vec<Check> {
    let db = generate_synthetic_db(&SyntheticConfig::default()).unwrap();
    let pairs = mated_and_nonmated_pairs(&db);
    let mut eers = Vec::new();
    for m in ORDER {
        eers.push(100.0 * eer(&unimodal_scores(&db, &pairs, m).unwrap()).unwrap());
    }
    let eer_ok = eers.iter().all(|e| (0.5..=3.0).contains(e));
    let kinds = [PolicyKind::AmbFhe1, PolicyKind::AmbFhe2];
    let report = saved_presentations(&db, &pairs, &kinds, &[1e-4, 1e-3, 1e-2]).unwrap();
    let mut trend_ok = true;
    let mut detail = format!("uni-modal EER iris {:.3}%, fingerprint {:.3}%", eers[0], eers[1]);
    for kind in kinds {
        let saved: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.policy == kind.name())
            .map(|r| r.saved_percent)
            .collect();
        trend_ok &= saved.len() == 3
            && saved.windows(2).all(|w| w[0] < w[1])
            && saved.iter().all(|s| (50.0..=99.0).contains(s));
        detail += &format!("; {kind} saved {:.2}/{:.2}/{:.2}%", saved[0], saved[1], saved[2]);
    }
    vec![check("3", eer_ok && trend_ok, detail)]
}

fn fusion_benefit() -> Vec<Check> {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in [42, 7, 1234] {
        let db = generate_synthetic_db(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let pairs = mated_and_nonmated_pairs(&db);
        let uni: Vec<f64> = ORDER
            .iter()
            .map(|&m| eer(&unimodal_scores(&db, &pairs, m).unwrap()).unwrap())
            .collect();
        let fused = eer(&CascadeScores::compute(&db, &pairs, &ORDER).unwrap().fused_set()).unwrap();
        pass &= uni.iter().all(|&u| fused < u);
        parts.push(format!(
            "seed {seed}: fused {:.3}% vs {:.3}%/{:.3}%",
            100.0 * fused,
            100.0 * uni[0],
            100.0 * uni[1]
        ));
    }
    vec![check("4", pass, parts.join("; "))]
}

fn benchmark_structure() -> Vec<Check> {
    let params = Preset::Pn12Qp109.params();
    let log_slots = params.slot_count().trailing_zeros() as u64;
    let mut fixture = BenchFixture::new(params, 512, 77).unwrap();
    let config = BenchConfig::default();
    let report = fixture.primitives("PN12QP109", config).unwrap();
    let (rot, mul, add) = (report.normalized("Rot1"), report.normalized("Mul"), report.normalized("Add"));
    let ordering = rot > mul && mul > add;
    let share = report.rotation_share > 2.0 / 3.0;
    let cmp = fixture.incremental_vs_naive(config).unwrap();
    let bound = log_slots + 4;
    let heavy = cmp.incremental_heavy_ops();
    let inc_total = cmp.incremental_ops.homomorphic_ops();
    let naive_total = cmp.naive_ops.homomorphic_ops();
    vec![
        check(
            "5a",
            ordering && share && heavy <= bound,
            format!(
                "normalized Rot1 {rot:.1} > Mul {mul:.1} > Add {add:.1}; rotation share {:.1}%; stage-2 rot+mul {heavy} <= {bound}",
                100.0 * report.rotation_share
            ),
        ),
        check(
            "5b",
            inc_total <= naive_total && cmp.incremental_ns <= cmp.naive_ns,
            format!(
                "incremental {inc_total} ops / {:.0} us vs naive fused {naive_total} ops / {:.0} us",
                cmp.incremental_ns / 1e3,
                cmp.naive_ns / 1e3
            ),
        ),
    ]
}

fn toy_server(retry_limit: usize, clock: &ManualClock) -> Arc<Server> {
    let layout = ReferenceLayout {
        template_len: 4,
        modalities: ORDER.to_vec(),
    };
    let keys = ServerKeys::generate(Preset::Toy.params(), layout, &mut ChaCha20Rng::seed_from_u64(8)).unwrap();
    let policy = PolicyKind::AmbFhe1.with_thresholds(vec![f64::NEG_INFINITY, f64::INFINITY]).unwrap();
    let config = ServerConfig {
        retry_limit,
        retry_window: Duration::from_secs(300),
    };
    let clock: Arc<dyn Clock> = Arc::new(clock.clone());
    Arc::new(Server::new(keys, policy, ReferenceStore::in_memory(), config, clock).unwrap())
}

fn toy_client(server: &Arc<Server>, cache: &mut KeyCache) -> Client<hefuse::protocol::MemoryTransport> {
    let (client_end, mut server_end) = duplex();
    let server = server.clone();
    thread::spawn(move || server.serve(&mut server_end));
    Client::connect(client_end.with_timeout(Duration::from_secs(30)), cache).unwrap()
}

fn toy_population() -> Vec<SubjectRecord> {
    generate_synthetic_db(&SyntheticConfig {
        n_subjects: 3,
        template_len: 4,
        samples_min: 3,
        samples_max: 3,
        modalities: ORDER.iter().map(|&modality| ModalityNoise { modality, sigma: 0.2 }).collect(),
        seed: 31,
    })
    .unwrap()
}

/// Outcomes (error code or verdict) of `attempts` sessions that a policy
/// rejecting everything turns into failures.
fn throttle_run(limit: usize, attempts: usize) -> Vec<String> {
    let clock = ManualClock::default();
    let layout = ReferenceLayout {
        template_len: 4,
        modalities: ORDER.to_vec(),
    };
    let keys = ServerKeys::generate(Preset::Toy.params(), layout, &mut ChaCha20Rng::seed_from_u64(8)).unwrap();
    let reject_all = PolicyKind::AmbFhe1
        .with_thresholds(vec![f64::NEG_INFINITY, f64::NEG_INFINITY])
        .unwrap();
    let config = ServerConfig {
        retry_limit: limit,
        retry_window: Duration::from_secs(300),
    };
    let dyn_clock: Arc<dyn Clock> = Arc::new(clock.clone());
    let srv = Arc::new(Server::new(keys, reject_all, ReferenceStore::in_memory(), config, dyn_clock).unwrap());
    let data = toy_population();
    let mut cache = KeyCache::default();
    let mut c = toy_client(&srv, &mut cache);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    c.enroll(&data[0].subject_id, &data[0].fused(&ORDER, 0).unwrap(), false, &mut rng)
        .unwrap();
    (0..attempts)
        .map(|_| {
            clock.advance(Duration::from_secs(1));
            let mut queue = ProbeQueue::new(ORDER.iter().map(|&m| data[0].sample(m, 1).unwrap().clone()));
            let out = c.verify(&data[0].subject_id, &mut queue, &mut rng).unwrap();
            match out.error {
                Some((code, _)) => format!("{code:?}"),
                None => format!("{:?}", out.verdict),
            }
        })
        .collect()
}

fn security_properties() -> Vec<Check> {
    let ctx = CkksContext::new(Preset::Pn12Qp109.params()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    let (sk, pk, _) = keygen(&ctx, Vec::new(), &mut rng).unwrap();
    let ev = Evaluator::new(ctx);
    let values = unit_vector(512, &mut rng);
    let mut encodings: Vec<Vec<u8>> = Vec::new();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ct = ev.encrypt_values(&pk, &values, &mut rng).unwrap();
        let back = ev.decrypt_values(&sk, &ct).unwrap();
        worst = values.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        encodings.push(ct.to_bytes());
    }
    encodings.sort();
    encodings.dedup();
    let distinct = encodings.len();

    let clock = ManualClock::default();
    let srv = toy_server(5, &clock);
    let data = toy_population();
    let mut cache = KeyCache::default();
    let mut c = toy_client(&srv, &mut cache);
    let mut erng = ChaCha20Rng::seed_from_u64(6);
    for rec in &data {
        c.enroll(&rec.subject_id, &rec.fused(&ORDER, 0).unwrap(), false, &mut erng).unwrap();
    }
    let mut queue = ProbeQueue::new(ORDER.iter().map(|&m| data[1].sample(m, 2).unwrap().clone()));
    let out = c.verify(&data[1].subject_id, &mut queue, &mut erng).unwrap();
    let plaintext_bytes: Vec<[u8; 8]> = data
        .iter()
        .flat_map(|rec| ORDER.iter().flat_map(move |&m| (0..3).flat_map(move |s| rec.sample(m, s).unwrap().values().to_vec())))
        .map(f64::to_le_bytes)
        .collect();
    let mut schema_ok = out.transcript.len() == 8;
    for (_, msg) in &out.transcript {
        schema_ok &= msg.schema().iter().all(|k| {
            matches!(
                k,
                FieldKind::SubjectId
                    | FieldKind::CiphertextBlob
                    | FieldKind::Stage
                    | FieldKind::ModalityCode
                    | FieldKind::Verdict
                    | FieldKind::ErrorCode
                    | FieldKind::ErrorText
            )
        });
        for (kind, blob) in msg.blobs() {
            schema_ok &= kind == FieldKind::CiphertextBlob && Ciphertext::from_bytes(blob).is_ok();
        }
        let bytes = msg.encode();
        schema_ok &= !plaintext_bytes.iter().any(|needle| bytes.windows(8).any(|w| w == needle));
    }

    let limit = 3;
    let first = throttle_run(limit, limit + 2);
    let second = throttle_run(limit, limit + 2);
    let throttled = format!("{:?}", ErrorCode::Throttled);
    let limiter_ok = first == second
        && first[..limit].iter().all(|o| o == "Reject")
        && first[limit..].iter().all(|o| *o == throttled);

    vec![
        check(
            "6a",
            distinct == 100 && worst < 1e-6,
            format!("{distinct}/100 byte-distinct ciphertexts, worst slot error {worst:.2e}"),
        ),
        check(
            "6b",
            schema_ok,
            format!("{}-message stage-2 transcript: blobs are ciphertexts, no plaintext coordinates", out.transcript.len()),
        ),
        check("6c", limiter_ok, format!("R={limit}: sessions {first:?}, identical on replay")),
    ]
}

fn wire_conformance() -> Vec<Check> {
    let vectors: Vec<(String, Vec<u8>)> = include_str!("data/wire_vectors.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (name, hex) = l.split_once(' ').unwrap();
            (name.to_string(), hex::decode(hex.trim()).unwrap())
        })
        .collect();
    let mut decoded = Vec::new();
    let mut round_trip = true;
    for (_, bytes) in &vectors {
        match Message::decode(bytes) {
            Ok(msg) => {
                round_trip &= msg.encode() == *bytes;
                decoded.push(msg);
            }
            Err(_) => round_trip = false,
        }
    }
    let mut types: Vec<u8> = decoded.iter().map(Message::msg_type).collect();
    types.sort();
    types.dedup();
    let injective = (0..decoded.len()).all(|i| (0..i).all(|j| decoded[i] != decoded[j]));

    let good = Message::Decision {
        stage: 1,
        verdict: hefuse::protocol::WireVerdict::Accept,
    }
    .encode();
    let mutate = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = good.clone();
        f(&mut b);
        b
    };
    let cases = [
        good[..5].to_vec(),
        mutate(&|b| b[0] = b'Z'),
        mutate(&|b| b[4] = 9),
        mutate(&|b| b[6] = 0x01),
        mutate(&|b| {
            b.push(0);
        }),
        mutate(&|b| {
            b.truncate(12);
            b[7] = 1;
        }),
        mutate(&|b| b[12] = 3),
    ];
    let mut codes: Vec<u16> = cases
        .iter()
        .map(|c| Message::decode(c).err().map_or(0, |e| e.code()))
        .collect();
    let all_rejected = codes.iter().all(|&c| c != 0);
    codes.sort();
    codes.dedup();
    vec![check(
        "7",
        round_trip && injective && types.len() == 9 && all_rejected && codes.len() == 7,
        format!(
            "{} golden vectors over {} message types round-trip; {} malformation classes, {} distinct codes",
            vectors.len(),
            types.len(),
            cases.len(),
            codes.len()
        ),
    )]
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Vec<Check>); 7] = [
        ("homomorphic correctness", homomorphic_correctness),
        ("oracle decision equivalence", decision_equivalence),
        ("saved-presentations trend", saved_presentations_trend),
        ("fusion benefit", fusion_benefit),
        ("benchmark structure", benchmark_structure),
        ("security properties", security_properties),
        ("wire conformance", wire_conformance),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let checks = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            vec![check("?", false, format!("panicked: {msg}"))]
        });
        for c in checks {
            let status = if c.pass { "PASS" } else { "FAIL" };
            println!("{status} criterion {} ({name}): {}", c.id, c.detail);
            if !c.pass {
                failed.push(format!("{} ({name})", c.id));
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}
