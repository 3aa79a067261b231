#![allow(dead_code)]

use hefuse::biometric::{Modality, SubjectRecord};
use hefuse::matcher::{FusionMode, MatchPolicy, Verdict};

/// Brute-force cascade outcome computed from raw coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    pub verdict: Verdict,
    pub stages_used: usize,
    /// Cumulative squared Euclidean distance after each evaluated stage.
    pub deltas: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cascade over explicit coordinates: stage `j` compares the running sum of
/// per-modality squared distances against `thresholds[j]` with strict `<`.
pub fn oracle_cascade(
    reference: &SubjectRecord,
    ref_session: usize,
    probe: &SubjectRecord,
    probe_session: usize,
    policy: &MatchPolicy,
) -> OracleOutcome {
    let dist = |m: Modality| {
        squared_distance(
            reference.sample(m, ref_session).unwrap().values(),
            probe.sample(m, probe_session).unwrap().values(),
        )
    };
    match policy.mode {
        FusionMode::UnconditionalAnd => {
            let total: f64 = policy.modality_order.iter().map(|&m| dist(m)).sum();
            OracleOutcome {
                verdict: if total < policy.thresholds[0] {
                    Verdict::Accept
                } else {
                    Verdict::Reject
                },
                stages_used: 1,
                deltas: vec![total],
            }
        }
        FusionMode::SequentialOr => {
            let mut deltas = Vec::new();
            let mut running = 0.0;
            for (j, &m) in policy.modality_order.iter().enumerate() {
                running += dist(m);
                deltas.push(running);
                if running < policy.thresholds[j] {
                    return OracleOutcome {
                        verdict: Verdict::Accept,
                        stages_used: j + 1,
                        deltas,
                    };
                }
            }
            OracleOutcome {
                verdict: Verdict::Reject,
                stages_used: deltas.len(),
                deltas,
            }
        }
    }
}

/// Whether any evaluated stage lands within `tol` of its threshold.
pub fn near_tie(outcome: &OracleOutcome, policy: &MatchPolicy, tol: f64) -> bool {
    outcome
        .deltas
        .iter()
        .zip(&policy.thresholds)
        .any(|(d, t)| (d - t).abs() < tol)
}
