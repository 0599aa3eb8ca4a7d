//! Matched precision/recall/F1, source-count accuracy and threshold sweeps.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::detect::StopDetector;
use crate::error::{invalid, Result};
use crate::estimate::{issl_estimate, threshold_estimate, IsslConfig};
use crate::spectrum::{grid_distance, DoaSet, SpatialSpectrum};

/// Default matching tolerance in degrees.
pub const DEFAULT_TOLERANCE: u32 = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchOutcome {
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    /// `(pred, gt, error in degrees)` for each true positive.
    pub pairs: Vec<(u16, u16, u32)>,
}

/// Greedy nearest-first matching: candidate pairs within `tol` are taken in
/// ascending distance (then ascending pred, gt), each side used at most once.
pub fn match_doas(pred: &DoaSet, gt: &DoaSet, tol: u32) -> MatchOutcome {
    let mut cands: Vec<(u32, u16, u16)> = Vec::new();
    for p in pred.iter() {
        for g in gt.iter() {
            let d = grid_distance(i64::from(p), i64::from(g));
            if d <= tol {
                cands.push((d, p, g));
            }
        }
    }
    cands.sort_unstable();
    let mut used_p: Vec<u16> = Vec::new();
    let mut used_g: Vec<u16> = Vec::new();
    let mut pairs = Vec::new();
    for (d, p, g) in cands {
        if !used_p.contains(&p) && !used_g.contains(&g) {
            used_p.push(p);
            used_g.push(g);
            pairs.push((p, g, d));
        }
    }
    let tp = pairs.len();
    MatchOutcome {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
        pairs,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Micro-averaged `(precision, recall, f1)`.
pub fn prf(outcomes: &[MatchOutcome]) -> (f64, f64, f64) {
    let (tp, fp, fn_) = outcomes
        .iter()
        .fold((0, 0, 0), |(a, b, c), o| (a + o.tp, b + o.fp, c + o.fn_));
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, f1_score(p, r))
}

/// Fraction of segments whose predicted count equals the true count.
pub fn detection_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(invalid(format!(
            "{} predicted counts vs {} true counts",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(ratio(hits, truth.len()))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub detection_accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    /// `confusion[true_count][predicted_count]` segment counts.
    pub confusion: Vec<Vec<usize>>,
    pub segments: usize,
    pub tolerance: u32,
}

/// Scores predicted source sets against ground truth, segment by segment.
pub fn evaluate(predicted: &[DoaSet], truth: &[DoaSet], tol: u32) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(invalid(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let outcomes: Vec<MatchOutcome> = predicted
        .iter()
        .zip(truth)
        .map(|(p, g)| match_doas(p, g, tol))
        .collect();
    Ok(report_from(&outcomes, predicted, truth, tol))
}

/// Builds a report from precomputed per-segment matches.
pub fn report_from(
    outcomes: &[MatchOutcome],
    predicted: &[DoaSet],
    truth: &[DoaSet],
    tol: u32,
) -> EvalReport {
    let (precision, recall, f1) = prf(outcomes);
    let pc: Vec<usize> = predicted.iter().map(DoaSet::len).collect();
    let tc: Vec<usize> = truth.iter().map(DoaSet::len).collect();
    let size = pc.iter().chain(&tc).copied().max().map_or(0, |m| m + 1);
    let mut confusion = vec![vec![0; size]; size];
    for (&p, &t) in pc.iter().zip(&tc) {
        confusion[t][p] += 1;
    }
    EvalReport {
        precision,
        recall,
        f1,
        detection_accuracy: detection_accuracy(&pc, &tc).unwrap_or(0.0),
        tp: outcomes.iter().map(|o| o.tp).sum(),
        fp: outcomes.iter().map(|o| o.fp).sum(),
        fn_: outcomes.iter().map(|o| o.fn_).sum(),
        confusion,
        segments: truth.len(),
        tolerance: tol,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    /// `None` for the iterative row.
    pub threshold: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub detection_accuracy: f64,
}

impl SweepRow {
    fn from_report(threshold: Option<f64>, r: &EvalReport) -> Self {
        Self {
            threshold,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            detection_accuracy: r.detection_accuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub tolerance: u32,
    pub nms_radius: u32,
    pub issl: IsslConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            nms_radius: 16,
            issl: IsslConfig::default(),
        }
    }
}

/// One threshold-baseline row per threshold, then one iterative row.
pub fn sweep_thresholds(
    corpus: &[(SpatialSpectrum, DoaSet)],
    thresholds: &[f64],
    detector: &dyn StopDetector,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    if thresholds.is_empty() {
        return Err(invalid("sweep needs at least one threshold"));
    }
    let truth: Vec<DoaSet> = corpus.iter().map(|(_, d)| d.clone()).collect();
    let mut rows = Vec::with_capacity(thresholds.len() + 1);
    for &t in thresholds {
        let pred: Vec<DoaSet> = corpus
            .iter()
            .map(|(s, _)| threshold_estimate(s, t, cfg.nms_radius).doas)
            .collect();
        rows.push(SweepRow::from_report(
            Some(t),
            &evaluate(&pred, &truth, cfg.tolerance)?,
        ));
    }
    let pred: Vec<DoaSet> = corpus
        .iter()
        .map(|(s, _)| issl_estimate(s, detector, &cfg.issl).doas)
        .collect();
    rows.push(SweepRow::from_report(
        None,
        &evaluate(&pred, &truth, cfg.tolerance)?,
    ));
    Ok(rows)
}
