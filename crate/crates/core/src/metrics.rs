//! Threshold calibration, error rates and presentation accounting.
//!
//! Scores are dissimilarities: a comparison matches when its score is
//! strictly below the threshold.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biometric::{
    generate_synthetic_db, mated_and_nonmated_pairs, Modality, PairLists, SubjectRecord, SyntheticConfig, Template,
    TemplateError,
};
use crate::matcher::{cumulative_ips, dissimilarity_from_ip, FusionMode, MatchError, MatchPolicy, PolicyKind};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0} score list is empty")]
    Empty(&'static str),
    #[error("FMR target {0} outside (0, 1)")]
    FmrOutOfRange(f64),
    #[error("score lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("subject {subject} lacks modality {modality} in session {session}")]
    MissingSample {
        subject: String,
        modality: Modality,
        session: usize,
    },
    #[error(transparent)]
    Policy(#[from] MatchError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("score file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Mated and non-mated dissimilarities of one comparison context.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub label: String,
    pub mated: Vec<f64>,
    pub nonmated: Vec<f64>,
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Fraction of non-mated scores strictly below `threshold`.
pub fn false_match_rate(nonmated: &[f64], threshold: f64) -> f64 {
    nonmated.iter().filter(|&&s| s < threshold).count() as f64 / nonmated.len() as f64
}

/// Fraction of mated scores at or above `threshold`.
pub fn false_non_match_rate(mated: &[f64], threshold: f64) -> f64 {
    mated.iter().filter(|&&s| s >= threshold).count() as f64 / mated.len() as f64
}

/// Largest threshold whose empirical FMR (strict `<`) does not exceed `fmr`.
pub fn threshold_at_fmr(nonmated: &[f64], fmr: f64) -> Result<f64, MetricsError> {
    if nonmated.is_empty() {
        return Err(MetricsError::Empty("non-mated"));
    }
    if !(fmr > 0.0 && fmr < 1.0) {
        return Err(MetricsError::FmrOutOfRange(fmr));
    }
    if let Some(i) = nonmated.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let s = sorted(nonmated);
    // Allowed false matches; the epsilon absorbs products like 0.29 * 100.
    let allowed = (fmr * s.len() as f64 * (1.0 + 1e-12)).floor() as usize;
    Ok(s[allowed.min(s.len() - 1)])
}

/// Equal error rate from a sweep over every pooled score (and `+inf`).
/// Returns the mean of FMR and FNMR where they are closest.
pub fn eer(scores: &ScoreSet) -> Result<f64, MetricsError> {
    if scores.mated.is_empty() {
        return Err(MetricsError::Empty("mated"));
    }
    if scores.nonmated.is_empty() {
        return Err(MetricsError::Empty("non-mated"));
    }
    let mated = sorted(&scores.mated);
    let nonmated = sorted(&scores.nonmated);
    let mut candidates: Vec<f64> = mated.iter().chain(&nonmated).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.push(f64::INFINITY);

    let (nm, nn) = (mated.len() as f64, nonmated.len() as f64);
    let mut best: Option<(f64, f64)> = None;
    for t in candidates {
        let fm = nonmated.partition_point(|&s| s < t) as f64 / nn;
        let fnm = (mated.len() - mated.partition_point(|&s| s < t)) as f64 / nm;
        let gap = (fm - fnm).abs();
        let mean = 0.5 * (fm + fnm);
        best = match best {
            Some((g, m)) if g < gap || (g == gap && m <= mean) => Some((g, m)),
            _ => Some((gap, mean)),
        };
    }
    Ok(best.map(|(_, m)| m).unwrap_or(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub mean: f64,
    pub max: f64,
}

/// Elementwise absolute deviation between index-aligned score lists.
pub fn score_deviation(plain: &[f64], encrypted: &[f64]) -> Result<Deviation, MetricsError> {
    if plain.len() != encrypted.len() {
        return Err(MetricsError::LengthMismatch(plain.len(), encrypted.len()));
    }
    if plain.is_empty() {
        return Err(MetricsError::Empty("plaintext"));
    }
    let diffs = plain.iter().zip(encrypted).map(|(a, b)| (a - b).abs());
    let (sum, max) = diffs.fold((0.0, 0.0f64), |(s, m), d| (s + d, m.max(d)));
    Ok(Deviation {
        mean: sum / plain.len() as f64,
        max,
    })
}

fn session<'a>(rec: &'a SubjectRecord, order: &[Modality], index: usize) -> Result<Vec<&'a Template>, MetricsError> {
    order
        .iter()
        .map(|&m| {
            rec.sample(m, index).ok_or_else(|| MetricsError::MissingSample {
                subject: rec.subject_id.clone(),
                modality: m,
                session: index,
            })
        })
        .collect()
}

fn pair_ips(a: &SubjectRecord, ai: usize, b: &SubjectRecord, bi: usize, order: &[Modality]) -> Result<Vec<f64>, MetricsError> {
    let r: Vec<Template> = session(a, order, ai)?.into_iter().cloned().collect();
    let p: Vec<Template> = session(b, order, bi)?.into_iter().cloned().collect();
    Ok(cumulative_ips(&r, &p))
}

/// Cumulative plaintext inner products per comparison and stage, in
/// modality `order`. Mated comparisons use the reference and probe sessions
/// of the pair; non-mated ones use the first session of each subject.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CascadeScores {
    pub order: Vec<Modality>,
    pub mated: Vec<Vec<f64>>,
    pub nonmated: Vec<Vec<f64>>,
}

impl CascadeScores {
    pub fn compute(db: &[SubjectRecord], pairs: &PairLists, order: &[Modality]) -> Result<Self, MetricsError> {
        let mated = pairs
            .mated
            .iter()
            .map(|p| {
                let rec = &db[p.subject];
                pair_ips(rec, p.reference, rec, p.probe, order)
            })
            .collect::<Result<_, _>>()?;
        let nonmated = pairs
            .nonmated
            .iter()
            .map(|p| pair_ips(&db[p.reference], 0, &db[p.probe], 0, order))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            order: order.to_vec(),
            mated,
            nonmated,
        })
    }

    /// Cumulative dissimilarities after `stage` blocks.
    pub fn stage_set(&self, stage: usize) -> ScoreSet {
        let pick = |rows: &[Vec<f64>]| rows.iter().map(|r| dissimilarity_from_ip(r[stage - 1], stage)).collect();
        let label = self.order[..stage].iter().map(|m| m.to_string()).collect::<Vec<_>>().join("+");
        ScoreSet {
            label,
            mated: pick(&self.mated),
            nonmated: pick(&self.nonmated),
        }
    }

    /// Fused dissimilarity over every block.
    pub fn fused_set(&self) -> ScoreSet {
        self.stage_set(self.order.len())
    }
}

/// Single-modality dissimilarities.
pub fn unimodal_scores(db: &[SubjectRecord], pairs: &PairLists, modality: Modality) -> Result<ScoreSet, MetricsError> {
    Ok(CascadeScores::compute(db, pairs, &[modality])?.stage_set(1))
}

/// Per-stage thresholds at `fmr`, each calibrated on the cumulative
/// non-mated distribution of its stage.
pub fn calibrate_policy(scores: &CascadeScores, kind: PolicyKind, fmr: f64) -> Result<MatchPolicy, MetricsError> {
    if scores.order != kind.order() {
        return Err(MatchError::InvalidPolicy(format!("scores are in the wrong order for {kind}")).into());
    }
    let thresholds = match kind.mode() {
        FusionMode::UnconditionalAnd => vec![threshold_at_fmr(&scores.fused_set().nonmated, fmr)?],
        FusionMode::SequentialOr => (1..=scores.order.len())
            .map(|j| threshold_at_fmr(&scores.stage_set(j).nonmated, fmr))
            .collect::<Result<_, _>>()?,
    };
    Ok(kind.with_thresholds(thresholds)?)
}

/// Modality presentations needed by one policy over all mated comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresentationRow {
    pub policy: String,
    /// FMR target in percent; `None` for the unconditional baseline.
    pub fmr_percent: Option<f64>,
    pub presentations: Vec<(Modality, usize)>,
    pub total: usize,
    pub baseline_total: usize,
    pub saved: usize,
    /// Presentations beyond the first modality in the baseline.
    pub denominator: usize,
    pub saved_percent: f64,
}

/// Runs the cascade on every mated comparison and counts how many probes
/// each stage acquired.
pub fn presentations_for_policy(mated_ips: &[Vec<f64>], policy: &MatchPolicy, fmr_percent: Option<f64>) -> PresentationRow {
    let m = policy.modality_count();
    let n = mated_ips.len();
    let mut counts = vec![0usize; m];
    match policy.mode {
        FusionMode::UnconditionalAnd => counts.iter_mut().for_each(|c| *c = n),
        FusionMode::SequentialOr => {
            for ips in mated_ips {
                for (j, count) in counts.iter_mut().enumerate() {
                    *count += 1;
                    let r = policy.decide(j + 1, ips[j]);
                    if r.decision == crate::matcher::StageDecision::Accept {
                        break;
                    }
                }
            }
        }
    }
    let total: usize = counts.iter().sum();
    let baseline_total = n * m;
    let saved = baseline_total - total;
    let denominator = n * (m - 1);
    PresentationRow {
        policy: policy.name.clone(),
        fmr_percent,
        presentations: policy.modality_order.iter().copied().zip(counts).collect(),
        total,
        baseline_total,
        saved,
        denominator,
        saved_percent: if denominator == 0 {
            0.0
        } else {
            100.0 * saved as f64 / denominator as f64
        },
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SavedPresentationsReport {
    pub mated_comparisons: usize,
    pub nonmated_comparisons: usize,
    pub rows: Vec<PresentationRow>,
}

/// Baseline row plus one row per sequential policy and FMR target
/// (targets given as fractions).
pub fn saved_presentations(
    db: &[SubjectRecord],
    pairs: &PairLists,
    kinds: &[PolicyKind],
    fmrs: &[f64],
) -> Result<SavedPresentationsReport, MetricsError> {
    let mut report = SavedPresentationsReport {
        mated_comparisons: pairs.mated.len(),
        nonmated_comparisons: pairs.nonmated.len(),
        rows: Vec::new(),
    };
    for &kind in kinds {
        let scores = CascadeScores::compute(db, pairs, &kind.order())?;
        match kind.mode() {
            FusionMode::UnconditionalAnd => {
                let policy = kind.with_thresholds(vec![f64::INFINITY])?;
                report.rows.push(presentations_for_policy(&scores.mated, &policy, None));
            }
            FusionMode::SequentialOr => {
                for &fmr in fmrs {
                    let policy = calibrate_policy(&scores, kind, fmr)?;
                    report
                        .rows
                        .push(presentations_for_policy(&scores.mated, &policy, Some(fmr * 100.0)));
                }
            }
        }
    }
    Ok(report)
}

impl SavedPresentationsReport {
    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>18} {:>18} {:>22}",
            "policy", "FMR(%)", "1st modality", "2nd modality", "saved"
        );
        for r in &self.rows {
            let fmr = r.fmr_percent.map_or("-".to_string(), |f| format!("{f}"));
            let cell = |i: usize| {
                r.presentations
                    .get(i)
                    .map_or("-".into(), |(m, c)| format!("{c} {m}"))
            };
            let saved = if r.fmr_percent.is_none() {
                "-".to_string()
            } else {
                format!("{}/{} ({:.2}%)", r.saved, r.denominator, r.saved_percent)
            };
            let _ = writeln!(out, "{:<10} {:>8} {:>18} {:>18} {:>22}", r.policy, fmr, cell(0), cell(1), saved);
        }
        let _ = writeln!(
            out,
            "mated comparisons: {}, non-mated comparisons: {}",
            self.mated_comparisons, self.nonmated_comparisons
        );
        out
    }
}

/// EER per uni-modal system and for the fused system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerReport {
    pub rows: Vec<(String, f64)>,
}

pub fn eer_report(db: &[SubjectRecord], pairs: &PairLists, order: &[Modality]) -> Result<EerReport, MetricsError> {
    let mut rows = Vec::new();
    for &m in order {
        rows.push((m.to_string(), eer(&unimodal_scores(db, pairs, m)?)?));
    }
    let fused = CascadeScores::compute(db, pairs, order)?.fused_set();
    rows.push((format!("fused ({})", fused.label), eer(&fused)?));
    Ok(EerReport { rows })
}

impl EerReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<28} {:>9}\n", "system", "EER(%)");
        for (name, e) in &self.rows {
            let _ = writeln!(out, "{:<28} {:>9.4}", name, 100.0 * e);
        }
        out
    }
}

/// One comparison in a score file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub reference_id: String,
    pub probe_id: String,
    pub mated: bool,
    pub stage: usize,
    pub plain_score: f64,
    pub encrypted_score: Option<f64>,
}

/// Header of score files.
pub const SCORE_FILE_HEADER: &str = "reference_id,probe_id,mated,stage,plain_score,encrypted_score";

pub fn write_scores<W: io::Write>(w: W, records: &[ScoreRecord]) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scores<R: io::Read>(r: R) -> Result<Vec<ScoreRecord>, MetricsError> {
    let mut input = csv::Reader::from_reader(r);
    let header = input.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != SCORE_FILE_HEADER {
        return Err(MetricsError::Csv(csv::Error::from(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected header {header:?}"),
        ))));
    }
    Ok(input.deserialize().collect::<Result<_, _>>()?)
}

/// Uni-modal EERs of a synthetic population at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepRow {
    pub sigma: f64,
    pub eers: Vec<(Modality, f64)>,
}

/// Regenerates `base` with every modality at each `sigma` and measures the
/// uni-modal EERs.
pub fn noise_sweep(base: &SyntheticConfig, sigmas: &[f64]) -> Result<Vec<NoiseSweepRow>, MetricsError> {
    sigmas
        .iter()
        .map(|&sigma| {
            let mut cfg = base.clone();
            cfg.modalities.iter_mut().for_each(|n| n.sigma = sigma);
            let db = generate_synthetic_db(&cfg)?;
            let pairs = mated_and_nonmated_pairs(&db);
            let eers = cfg
                .modalities
                .iter()
                .map(|n| Ok((n.modality, eer(&unimodal_scores(&db, &pairs, n.modality)?)?)))
                .collect::<Result<_, MetricsError>>()?;
            Ok(NoiseSweepRow { sigma, eers })
        })
        .collect()
}

/// Sweep row whose EER for `modality` is closest to `target`.
pub fn closest_sigma(rows: &[NoiseSweepRow], modality: Modality, target: f64) -> Option<(f64, f64)> {
    rows.iter()
        .filter_map(|r| r.eers.iter().find(|(m, _)| *m == modality).map(|&(_, e)| (r.sigma, e)))
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(mated: &[f64], nonmated: &[f64]) -> ScoreSet {
        ScoreSet {
            label: "t".into(),
            mated: mated.to_vec(),
            nonmated: nonmated.to_vec(),
        }
    }

    #[test]
    fn threshold_at_fmr_basics() {
        let nm: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(threshold_at_fmr(&nm, 0.01).unwrap(), 2.0);
        assert_eq!(threshold_at_fmr(&nm, 1e-9).unwrap(), 1.0);
        assert_eq!(threshold_at_fmr(&[3.0; 7], 0.5).unwrap(), 3.0);
        assert_eq!(threshold_at_fmr(&nm, 0.29).unwrap(), 30.0);
        assert!(threshold_at_fmr(&[], 0.1).is_err());
        assert!(threshold_at_fmr(&nm, 0.0).is_err());
        assert!(threshold_at_fmr(&nm, 1.0).is_err());
    }

    #[test]
    fn eer_limits() {
        assert_eq!(eer(&set(&[0.1, 0.2], &[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(eer(&set(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap(), 0.5);
        assert!(eer(&set(&[], &[1.0])).is_err());
    }

    #[test]
    fn deviation_stats() {
        assert_eq!(score_deviation(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), Deviation { mean: 0.0, max: 0.0 });
        let d = score_deviation(&[1.0], &[1.5]).unwrap();
        assert_eq!(d.mean, d.max);
        assert!(score_deviation(&[1.0], &[]).is_err());
    }

    #[test]
    fn extreme_thresholds_bound_savings() {
        let ips = vec![vec![0.9, 1.8], vec![0.2, 0.9], vec![0.5, 1.4]];
        let always = PolicyKind::AmbFhe1.with_thresholds(vec![f64::INFINITY, 0.0]).unwrap();
        let row = presentations_for_policy(&ips, &always, Some(1.0));
        assert_eq!(row.presentations[1].1, 0);
        assert_eq!(row.saved_percent, 100.0);
        let never = PolicyKind::AmbFhe1.with_thresholds(vec![f64::NEG_INFINITY, 0.0]).unwrap();
        let row = presentations_for_policy(&ips, &never, Some(1.0));
        assert_eq!((row.saved, row.saved_percent), (0, 0.0));
        let baseline = PolicyKind::MultiAnd.with_thresholds(vec![1.0]).unwrap();
        let row = presentations_for_policy(&ips, &baseline, None);
        assert_eq!((row.total, row.baseline_total, row.saved), (6, 6, 0));
    }

    #[test]
    fn score_file_round_trip() {
        let recs = vec![
            ScoreRecord {
                reference_id: "a".into(),
                probe_id: "b".into(),
                mated: true,
                stage: 1,
                plain_score: 0.25,
                encrypted_score: Some(0.2500001),
            },
            ScoreRecord {
                reference_id: "a".into(),
                probe_id: "c".into(),
                mated: false,
                stage: 2,
                plain_score: 3.5,
                encrypted_score: None,
            },
        ];
        let mut buf = Vec::new();
        write_scores(&mut buf, &recs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(SCORE_FILE_HEADER));
        assert_eq!(read_scores(&buf[..]).unwrap(), recs);
        assert!(read_scores(&b"x,y\n1,2\n"[..]).is_err());
    }
}
