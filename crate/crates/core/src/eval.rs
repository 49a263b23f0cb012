//! Scoring detected minutiae against ground truth.
//!
//! Sensitivity is `1 - missed / truth` and specificity `1 - false / truth`.
//! Both are per image; datasets are summarized by mean and sample standard
//! deviation.

use std::fmt::Write as _;

use thiserror::Error;

use crate::minutiae::MinutiaeSet;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("image id mismatch: detected {detected:?}, truth {truth:?}")]
    ImageIdMismatch { detected: String, truth: String },
    #[error("match tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("ground truth for {0:?} is empty; sensitivity and specificity are undefined")]
    ZeroGroundTruth(String),
    #[error("nothing to aggregate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub detected: usize,
    pub truth: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub image_id: String,
    pub matched: usize,
    pub missed: usize,
    pub false_count: usize,
    pub ground_truth_count: usize,
    pub detected_count: usize,
    pub tolerance: f64,
    pub pairs: Vec<MatchPair>,
}

/// One-to-one greedy pairing in order of increasing Euclidean distance,
/// considering only pairs within `tolerance`. Minutia kind is ignored.
pub fn match_minutiae(detected: &MinutiaeSet, truth: &MinutiaeSet, tolerance: f64) -> Result<MatchResult, EvalError> {
    if detected.image_id != truth.image_id {
        return Err(EvalError::ImageIdMismatch { detected: detected.image_id.clone(), truth: truth.image_id.clone() });
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(EvalError::NonPositiveTolerance(tolerance));
    }
    let mut candidates = Vec::new();
    for (i, d) in detected.minutiae.iter().enumerate() {
        for (j, t) in truth.minutiae.iter().enumerate() {
            let dist = (d.x as f64 - t.x as f64).hypot(d.y as f64 - t.y as f64);
            if dist <= tolerance {
                candidates.push(MatchPair { detected: i, truth: j, distance: dist });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.distance.total_cmp(&b.distance).then(a.truth.cmp(&b.truth)).then(a.detected.cmp(&b.detected))
    });
    let mut det_used = vec![false; detected.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if det_used[c.detected] || truth_used[c.truth] {
            continue;
        }
        det_used[c.detected] = true;
        truth_used[c.truth] = true;
        pairs.push(c);
    }
    let matched = pairs.len();
    Ok(MatchResult {
        image_id: detected.image_id.clone(),
        matched,
        missed: truth.len() - matched,
        false_count: detected.len() - matched,
        ground_truth_count: truth.len(),
        detected_count: detected.len(),
        tolerance,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub sen: f64,
    /// Not clamped: negative when there are more false detections than truth.
    pub spe: f64,
}

pub fn compute_metrics(result: &MatchResult) -> Result<Metrics, EvalError> {
    if result.ground_truth_count == 0 {
        return Err(EvalError::ZeroGroundTruth(result.image_id.clone()));
    }
    let gt = result.ground_truth_count as f64;
    Ok(Metrics { sen: 1.0 - result.missed as f64 / gt, spe: 1.0 - result.false_count as f64 / gt })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub per_image: Vec<(String, Metrics)>,
    pub mean_sen: f64,
    pub mean_spe: f64,
    /// Sample standard deviations (divisor n - 1); zero when n = 1.
    pub sd_sen: f64,
    pub sd_spe: f64,
    pub n: usize,
}

impl AggregateReport {
    pub fn has_negative_spe(&self) -> bool {
        self.per_image.iter().any(|(_, m)| m.spe < 0.0)
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn aggregate(per_image: &[(String, Metrics)]) -> Result<AggregateReport, EvalError> {
    if per_image.is_empty() {
        return Err(EvalError::Empty);
    }
    let sen: Vec<f64> = per_image.iter().map(|(_, m)| m.sen).collect();
    let spe: Vec<f64> = per_image.iter().map(|(_, m)| m.spe).collect();
    let (mean_sen, sd_sen) = mean_sd(&sen);
    let (mean_spe, sd_spe) = mean_sd(&spe);
    Ok(AggregateReport { per_image: per_image.to_vec(), mean_sen, mean_spe, sd_sen, sd_spe, n: per_image.len() })
}

/// Mean/SD table in percent, rows Mean and SD, columns SEN and SPE.
pub fn render_summary_table(report: &AggregateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6}{:>10}{:>10}", "", "SEN", "SPE");
    let _ = writeln!(out, "{:<6}{:>10.2}{:>10.2}", "Mean", 100.0 * report.mean_sen, 100.0 * report.mean_spe);
    let _ = writeln!(out, "{:<6}{:>10.2}{:>10.2}", "SD", 100.0 * report.sd_sen, 100.0 * report.sd_spe);
    out
}
