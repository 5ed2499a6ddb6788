//! Classification errors and precision-recall evaluation.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::learners::ProbabilisticClassifier;

/// `|F(x_i) - y_i|` for every row, in row order.
pub fn classification_errors(
    model: &dyn ProbabilisticClassifier,
    ds: &LabeledDataset,
) -> Result<Vec<f64>> {
    let probs = model.predict_all(ds)?;
    Ok(errors_from_probabilities(&probs, ds.labels()))
}

pub fn errors_from_probabilities(probs: &[f64], labels: &[u8]) -> Vec<f64> {
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (p - f64::from(y)).abs())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall points, one per distinct score threshold, by rising recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// Step-wise area: sum of (R_n - R_{n-1}) * P_n with R_0 = 0.
    pub fn average_precision(&self) -> f64 {
        let mut prev = 0.0;
        let mut ap = 0.0;
        for p in &self.points {
            ap += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        ap
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 {
        return Err(Error::SingleClass(0));
    }
    if pos == labels.len() {
        return Err(Error::SingleClass(1));
    }
    Ok(pos)
}

/// Tied scores form a single threshold, so the curve does not depend on the
/// input order of equal-score rows.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<PrCurve> {
    let total_pos = check_inputs(scores, labels)? as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += labels[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        points.push(PrPoint {
            recall: tp as f64 / total_pos,
            precision: tp as f64 / seen as f64,
        });
    }
    Ok(PrCurve { points })
}

/// Area under the precision-recall curve in average-precision form.
pub fn aucprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(pr_curve(scores, labels)?.average_precision())
}
