//! Classification metrics over argmax decisions: per-class precision, macro
//! and micro averages, and rank-based average precision.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub class_scores: Vec<f64>,
    pub predicted: usize,
    pub gt: usize,
    pub sample_id: u64,
    pub frame_id: u64,
}

impl PredictionRecord {
    /// Builds a record whose decision is the argmax of `class_scores`.
    pub fn new(class_scores: Vec<f64>, gt: usize, sample_id: u64, frame_id: u64) -> Self {
        Self {
            predicted: argmax(&class_scores),
            class_scores,
            gt,
            sample_id,
            frame_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub ap: f64,
    pub support: usize,
    /// The class was never predicted, so its precision is reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub never_predicted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_avg_precision: f64,
    pub micro_avg_precision: f64,
    pub map: f64,
    pub per_class: BTreeMap<usize, ClassMetrics>,
}

/// Area under the interpolated precision-recall curve of one class. Records
/// sharing a score enter the curve together, so the result does not depend
/// on record order.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> f64 {
    let total = positive.iter().filter(|&&p| p).count();
    if total == 0 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            tp += usize::from(positive[idx[i]]);
            seen += 1;
            i += 1;
        }
        curve.push((tp as f64 / total as f64, tp as f64 / seen as f64));
    }
    // precision envelope: max precision at any recall to the right
    let mut ap = 0.0;
    let mut best = 0.0f64;
    let mut envelope = vec![0.0; curve.len()];
    for j in (0..curve.len()).rev() {
        best = best.max(curve[j].1);
        envelope[j] = best;
    }
    let mut prev_recall = 0.0;
    for (j, &(r, _)) in curve.iter().enumerate() {
        ap += (r - prev_recall) * envelope[j];
        prev_recall = r;
    }
    ap
}

pub fn compute_metrics(records: &[PredictionRecord], n_classes: usize) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::Empty("prediction records"));
    }
    for r in records {
        if r.class_scores.len() != n_classes {
            return Err(Error::LengthMismatch {
                left: r.class_scores.len(),
                right: n_classes,
            });
        }
        if r.gt >= n_classes || r.predicted >= n_classes {
            return Err(Error::InvalidTarget(format!(
                "class index out of range for {n_classes} classes (sample {}, frame {})",
                r.sample_id, r.frame_id
            )));
        }
    }

    let per_class: Vec<(usize, ClassMetrics)> = (0..n_classes)
        .into_par_iter()
        .map(|c| {
            let support = records.iter().filter(|r| r.gt == c).count();
            let predicted = records.iter().filter(|r| r.predicted == c).count();
            let tp = records.iter().filter(|r| r.predicted == c && r.gt == c).count();
            let scores: Vec<f64> = records.iter().map(|r| r.class_scores[c]).collect();
            let positive: Vec<bool> = records.iter().map(|r| r.gt == c).collect();
            let m = ClassMetrics {
                precision: if predicted == 0 {
                    0.0
                } else {
                    tp as f64 / predicted as f64
                },
                ap: average_precision(&scores, &positive),
                support,
                never_predicted: predicted == 0,
            };
            (c, m)
        })
        .collect();

    let supported: Vec<&ClassMetrics> = per_class.iter().map(|(_, m)| m).filter(|m| m.support > 0).collect();
    let n_sup = supported.len() as f64;
    let macro_avg_precision = supported.iter().map(|m| m.precision).sum::<f64>() / n_sup;
    let map = supported.iter().map(|m| m.ap).sum::<f64>() / n_sup;

    let correct = records.iter().filter(|r| r.predicted == r.gt).count();
    let micro_avg_precision = correct as f64 / records.len() as f64;
    // pooled TP / (TP + FP) over classes is the same count
    debug_assert_eq!(
        per_class
            .iter()
            .map(|(c, _)| records.iter().filter(|r| r.predicted == *c && r.gt == *c).count())
            .sum::<usize>(),
        correct
    );

    Ok(MetricsReport {
        macro_avg_precision,
        micro_avg_precision,
        map,
        per_class: per_class.into_iter().collect(),
    })
}

/// Fraction of records whose decision matches the ground truth.
pub fn accuracy(records: &[PredictionRecord]) -> f64 {
    let correct = records.iter().filter(|r| r.predicted == r.gt).count();
    correct as f64 / records.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let recs: Vec<_> = (0..6)
            .map(|i| {
                let mut s = vec![0.1; 3];
                s[i % 3] = 0.8;
                PredictionRecord::new(s, i % 3, i as u64, 0)
            })
            .collect();
        let m = compute_metrics(&recs, 3).unwrap();
        assert_eq!((m.macro_avg_precision, m.micro_avg_precision, m.map), (1.0, 1.0, 1.0));
    }

    #[test]
    fn unsupported_class_is_excluded() {
        let recs = vec![
            PredictionRecord::new(vec![0.6, 0.1, 0.3], 0, 0, 0),
            PredictionRecord::new(vec![0.2, 0.1, 0.7], 0, 1, 0),
        ];
        let m = compute_metrics(&recs, 3).unwrap();
        assert_eq!(m.macro_avg_precision, 1.0);
        assert!(m.per_class[&1].never_predicted);
        assert_eq!(m.per_class[&2].precision, 0.0);
        assert_eq!(m.micro_avg_precision, 0.5);
    }

    #[test]
    fn wrong_width_is_rejected() {
        let recs = vec![PredictionRecord::new(vec![0.5, 0.5], 0, 0, 0)];
        assert!(compute_metrics(&recs, 3).is_err());
        assert!(compute_metrics(&[], 3).is_err());
    }
}
