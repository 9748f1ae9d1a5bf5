// SPDX-License-Identifier: Apache-2.0

//! Detection metrics over ID and OOD score lists.
//!
//! ID is the positive class and higher scores mean "more ID". AUROC counts
//! tied (id, ood) pairs as half a win. FPR at a TPR target picks its
//! threshold from the observed ID scores and classifies `score >= threshold`
//! as ID, without interpolation.

use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_TPR_TARGET: f64 = 0.95;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{0} score list is empty")]
    Empty(&'static str),
    #[error("{which} score {index} is not finite ({value})")]
    NonFinite {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("TPR target must lie in (0, 1], got {0}")]
    InvalidTarget(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledScores {
    pub id_scores: Vec<f64>,
    pub ood_scores: Vec<f64>,
}

impl LabeledScores {
    pub fn new(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> Result<Self> {
        let scores = LabeledScores {
            id_scores,
            ood_scores,
        };
        scores.validate()?;
        Ok(scores)
    }

    pub fn validate(&self) -> Result<()> {
        for (which, list) in [("ID", &self.id_scores), ("OOD", &self.ood_scores)] {
            if list.is_empty() {
                return Err(MetricsError::Empty(which));
            }
            if let Some(index) = list.iter().position(|v| !v.is_finite()) {
                return Err(MetricsError::NonFinite {
                    which,
                    index,
                    value: list[index],
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricResult {
    pub auroc: f64,
    pub fpr95: f64,
    pub threshold95: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub fpr: f64,
    pub threshold: f64,
    /// TPR actually achieved at `threshold`.
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are classified ID; the first point uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// AUROC through the Mann-Whitney rank sum, with midranks for ties.
///
/// Ranks are doubled so every midrank is an integer and the statistic is
/// computed exactly before the final division.
pub fn auroc(scores: &LabeledScores) -> Result<f64> {
    scores.validate()?;
    let n_id = scores.id_scores.len();
    let n_ood = scores.ood_scores.len();

    let mut all: Vec<(f64, bool)> = scores
        .id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(scores.ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_x2: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share the midrank (start + 1 + end) / 2.
        let ids_in_group = all[start..end].iter().filter(|(_, is_id)| *is_id).count() as u128;
        rank_sum_x2 += ids_in_group * (start as u128 + 1 + end as u128);
        start = end;
    }
    let n1 = n_id as u128;
    let u_x2 = rank_sum_x2 - n1 * (n1 + 1);
    Ok(u_x2 as f64 / (2 * n1 * n_ood as u128) as f64)
}

/// FPR at the largest observed ID score whose TPR reaches `tpr_target`.
pub fn fpr_at_tpr(scores: &LabeledScores, tpr_target: f64) -> Result<OperatingPoint> {
    scores.validate()?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(MetricsError::InvalidTarget(tpr_target));
    }
    let n_id = scores.id_scores.len();
    let mut id = scores.id_scores.clone();
    id.sort_by(|a, b| b.total_cmp(a));

    let mut at = 0;
    let (threshold, tpr) = loop {
        let value = id[at];
        while at < n_id && id[at] == value {
            at += 1;
        }
        let tpr = at as f64 / n_id as f64;
        if tpr >= tpr_target || at == n_id {
            break (value, tpr);
        }
    };

    let mut ood = scores.ood_scores.clone();
    ood.sort_by(|a, b| a.total_cmp(b));
    let below = ood.partition_point(|&s| s < threshold);
    let fpr = (ood.len() - below) as f64 / ood.len() as f64;
    Ok(OperatingPoint {
        fpr,
        threshold,
        tpr,
    })
}

/// ROC staircase from `(0, 0)` to `(1, 1)`, one point per distinct score.
pub fn roc_curve(scores: &LabeledScores) -> Result<Vec<RocPoint>> {
    scores.validate()?;
    let n_id = scores.id_scores.len() as f64;
    let n_ood = scores.ood_scores.len() as f64;
    let mut all: Vec<(f64, bool)> = scores
        .id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(scores.ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut start = 0;
    while start < all.len() {
        let value = all[start].0;
        let mut end = start;
        while end < all.len() && all[end].0 == value {
            if all[end].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        points.push(RocPoint {
            threshold: value,
            fpr: fp as f64 / n_ood,
            tpr: tp as f64 / n_id,
        });
        start = end;
    }
    Ok(points)
}

pub fn trapezoid_area(curve: &[RocPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// AUROC and FPR95 for one (ID, OOD) pair.
pub fn compute_metrics(scores: &LabeledScores) -> Result<MetricResult> {
    let op = fpr_at_tpr(scores, DEFAULT_TPR_TARGET)?;
    Ok(MetricResult {
        auroc: auroc(scores)?,
        fpr95: op.fpr,
        threshold95: op.threshold,
        n_id: scores.id_scores.len(),
        n_ood: scores.ood_scores.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(id: &[f64], ood: &[f64]) -> LabeledScores {
        LabeledScores::new(id.to_vec(), ood.to_vec()).unwrap()
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&ls(&[0.9, 0.8], &[0.2, 0.1])).unwrap(), 1.0);
        assert_eq!(auroc(&ls(&[0.1], &[0.9])).unwrap(), 0.0);
        assert_eq!(auroc(&ls(&[0.5, 0.7], &[0.5, 0.3])).unwrap(), 0.875);
    }

    #[test]
    fn all_tied_is_half() {
        assert_eq!(auroc(&ls(&[1.0; 3], &[1.0; 5])).unwrap(), 0.5);
    }

    #[test]
    fn empty_or_non_finite_is_rejected() {
        let empty = LabeledScores {
            id_scores: vec![],
            ood_scores: vec![1.0],
        };
        assert_eq!(auroc(&empty), Err(MetricsError::Empty("ID")));
        let nan = LabeledScores {
            id_scores: vec![1.0],
            ood_scores: vec![f64::NAN],
        };
        assert!(matches!(
            fpr_at_tpr(&nan, 0.95),
            Err(MetricsError::NonFinite { .. })
        ));
    }

    #[test]
    fn fpr_perfect_separation() {
        let op = fpr_at_tpr(&ls(&[1.0; 10], &[0.0; 10]), 0.95).unwrap();
        assert_eq!(op.fpr, 0.0);
        assert_eq!(op.threshold, 1.0);
    }

    #[test]
    fn fpr_worked_fixture() {
        let id: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let op = fpr_at_tpr(&ls(&id, &[0.05, 0.15, 0.25]), 0.95).unwrap();
        assert_eq!(op.threshold, 0.10);
        assert_eq!(op.fpr, 2.0 / 3.0);
        assert_eq!(op.tpr, 0.95);
    }

    #[test]
    fn fpr_identical_distributions_equals_achieved_tpr() {
        let s: Vec<f64> = (0..37).map(|i| ((i * 7) % 11) as f64).collect();
        let op = fpr_at_tpr(&ls(&s, &s), 0.95).unwrap();
        assert_eq!(op.fpr, op.tpr);
        assert!(op.tpr >= 0.95);
    }

    #[test]
    fn fpr_target_must_be_in_unit_interval() {
        let s = ls(&[1.0], &[0.0]);
        assert!(fpr_at_tpr(&s, 0.0).is_err());
        assert!(fpr_at_tpr(&s, 1.5).is_err());
        assert_eq!(fpr_at_tpr(&s, 1.0).unwrap().threshold, 1.0);
    }

    #[test]
    fn roc_single_pair() {
        let curve = roc_curve(&ls(&[0.9], &[0.1])).unwrap();
        let pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(trapezoid_area(&curve), 1.0);
    }

    #[test]
    fn roc_area_with_ties_matches_auroc() {
        let s = ls(&[0.5, 0.7, 0.7, 0.2], &[0.5, 0.3, 0.7]);
        let area = trapezoid_area(&roc_curve(&s).unwrap());
        assert!((area - auroc(&s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn compute_metrics_counts() {
        let m = compute_metrics(&ls(&[0.9, 0.8, 0.7], &[0.1, 0.2])).unwrap();
        assert_eq!((m.n_id, m.n_ood), (3, 2));
        assert_eq!(m.auroc, 1.0);
        assert_eq!(m.fpr95, 0.0);
        assert_eq!(m.threshold95, 0.7);
    }
}
