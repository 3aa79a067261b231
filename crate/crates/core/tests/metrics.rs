use hefuse::biometric::{generate_synthetic_db, mated_and_nonmated_pairs, Modality, ModalityNoise, SyntheticConfig};
use hefuse::matcher::PolicyKind;
use hefuse::metrics::{
    calibrate_policy, eer, false_match_rate, false_non_match_rate, presentations_for_policy, saved_presentations,
    score_deviation, threshold_at_fmr, CascadeScores, ScoreSet,
};
use proptest::prelude::*;

/// EER by brute force: each pooled score and +inf tried as threshold, with
/// FMR and FNMR counted by linear scans.
fn brute_force_eer(mated: &[f64], nonmated: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = mated.iter().chain(nonmated).copied().collect();
    thresholds.push(f64::INFINITY);
    let mut best = (f64::INFINITY, f64::INFINITY);
    for &t in &thresholds {
        let fm = nonmated.iter().filter(|&&s| s < t).count() as f64 / nonmated.len() as f64;
        let fnm = mated.iter().filter(|&&s| s >= t).count() as f64 / mated.len() as f64;
        let gap = (fm - fnm).abs();
        let mean = (fm + fnm) / 2.0;
        if gap < best.0 || (gap == best.0 && mean < best.1) {
            best = (gap, mean);
        }
    }
    best.1
}

fn set(mated: Vec<f64>, nonmated: Vec<f64>) -> ScoreSet {
    ScoreSet {
        label: "t".into(),
        mated,
        nonmated,
    }
}

#[test]
fn eer_limits() {
    assert_eq!(eer(&set(vec![0.1, 0.2], vec![1.0, 2.0])).unwrap(), 0.0);
    let same = vec![0.5, 1.0, 1.5, 2.0];
    assert_eq!(eer(&set(same.clone(), same)).unwrap(), 0.5);
}

#[test]
fn threshold_examples() {
    let nonmated: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(threshold_at_fmr(&nonmated, 0.01).unwrap(), 2.0);
    assert!(threshold_at_fmr(&nonmated, 1e-9).unwrap() <= 1.0);
    assert_eq!(threshold_at_fmr(&[3.0; 10], 0.5).unwrap(), 3.0);
    assert_eq!(false_match_rate(&[3.0; 10], 3.0), 0.0);
    assert!(threshold_at_fmr(&[], 0.1).is_err());
    assert!(threshold_at_fmr(&nonmated, 1.0).is_err());
}

#[test]
fn deviation_examples() {
    let d = score_deviation(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
    assert_eq!((d.mean, d.max), (0.0, 0.0));
    let d = score_deviation(&[1.0], &[1.25]).unwrap();
    assert_eq!(d.mean, d.max);
    assert!(score_deviation(&[1.0], &[]).is_err());
}

#[test]
fn threshold_extremes_bound_the_savings() {
    let ips = vec![vec![0.9, 1.8], vec![0.2, 1.1], vec![0.5, 1.4]];
    let always = PolicyKind::AmbFhe1.with_thresholds(vec![f64::INFINITY, f64::INFINITY]).unwrap();
    let never = PolicyKind::AmbFhe1
        .with_thresholds(vec![f64::NEG_INFINITY, f64::NEG_INFINITY])
        .unwrap();
    assert_eq!(presentations_for_policy(&ips, &always, Some(1.0)).saved_percent, 100.0);
    assert_eq!(presentations_for_policy(&ips, &never, Some(1.0)).saved_percent, 0.0);
}

fn small_db(seed: u64) -> Vec<hefuse::SubjectRecord> {
    generate_synthetic_db(&SyntheticConfig {
        n_subjects: 60,
        template_len: 32,
        samples_min: 2,
        samples_max: 4,
        modalities: vec![
            ModalityNoise {
                modality: Modality::Iris,
                sigma: 0.12,
            },
            ModalityNoise {
                modality: Modality::Fingerprint,
                sigma: 0.14,
            },
        ],
        seed,
    })
    .unwrap()
}

#[test]
fn report_rows_are_consistent_and_monotone() {
    let db = small_db(3);
    let pairs = mated_and_nonmated_pairs(&db);
    let report = saved_presentations(&db, &pairs, &PolicyKind::ALL, &[1e-3, 1e-2, 1e-1]).unwrap();
    assert_eq!(report.rows.len(), 7);
    let n = pairs.mated.len();
    assert_eq!(report.rows[0].total, 2 * n);
    for kind in [PolicyKind::AmbFhe1, PolicyKind::AmbFhe2] {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.policy == kind.name()).collect();
        for r in &rows {
            assert_eq!(r.saved, r.baseline_total - r.total);
            assert_eq!(r.presentations[0].1, n);
            assert_eq!(r.denominator, n);
            assert!((0.0..=100.0).contains(&r.saved_percent));
        }
        assert!(rows.windows(2).all(|w| w[0].saved_percent <= w[1].saved_percent));
    }
}

#[test]
fn stage_scores_match_pairwise_distances() {
    let db = small_db(4);
    let pairs = mated_and_nonmated_pairs(&db);
    let order = [Modality::Fingerprint, Modality::Iris];
    let scores = CascadeScores::compute(&db, &pairs, &order).unwrap();
    let s2 = scores.stage_set(2);
    for (i, p) in pairs.mated.iter().enumerate().take(20) {
        let rec = &db[p.subject];
        let d = |m| rec.sample(m, p.reference).unwrap().dissimilarity(rec.sample(m, p.probe).unwrap());
        assert!((s2.mated[i] - (d(Modality::Fingerprint) + d(Modality::Iris))).abs() < 1e-9);
    }
    let policy = calibrate_policy(&scores, PolicyKind::AmbFhe2, 0.01).unwrap();
    for j in 1..=2 {
        assert!(false_match_rate(&scores.stage_set(j).nonmated, policy.threshold(j)) <= 0.01);
    }
}

proptest! {
    #[test]
    fn eer_matches_brute_force(
        mated in proptest::collection::vec(0.0f64..4.0, 1..40),
        nonmated in proptest::collection::vec(0.0f64..4.0, 1..40),
    ) {
        let got = eer(&set(mated.clone(), nonmated.clone())).unwrap();
        prop_assert!((got - brute_force_eer(&mated, &nonmated)).abs() < 1e-12);
    }

    #[test]
    fn calibrated_threshold_respects_the_target(
        nonmated in proptest::collection::vec(0.0f64..4.0, 1..200),
        fmr in 0.001f64..0.999,
    ) {
        let t = threshold_at_fmr(&nonmated, fmr).unwrap();
        prop_assert!(false_match_rate(&nonmated, t) <= fmr);
        // No larger score could serve as threshold without exceeding it.
        if let Some(next) = nonmated.iter().copied().filter(|&s| s > t).reduce(f64::min) {
            prop_assert!(false_match_rate(&nonmated, next) > fmr);
        }
    }

    #[test]
    fn fmr_and_fnmr_are_complementary_at_any_threshold(
        scores in proptest::collection::vec(0.0f64..4.0, 1..50),
        t in 0.0f64..4.0,
    ) {
        let fm = false_match_rate(&scores, t);
        let fnm = false_non_match_rate(&scores, t);
        prop_assert!((fm + fnm - 1.0).abs() < 1e-12);
    }
}
