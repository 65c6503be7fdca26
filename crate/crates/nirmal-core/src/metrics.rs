//! Classification metrics: confusion matrix, accuracy, per-class
//! precision/recall/F1, and the weighted and macro F1 aggregates.
//!
//! All counting happens in 64-bit integers; divisions occur only at the
//! very end, in f64.

use serde::Serialize;

use crate::error::{Error, Result};

/// K by K count matrix; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    k: usize,
}

/// Builds the confusion matrix for one batch of scored samples.
pub fn confusion(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "confusion: {} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if k == 0 {
        return Err(Error::Contract("confusion: K must be >= 1".into()));
    }
    let mut counts = vec![0u64; k * k];
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= k || t >= k {
            return Err(Error::Contract(format!(
                "confusion: class out of range (pred {p}, label {t}, K={k})"
            )));
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { counts, k })
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.k
    }

    /// Count of samples with true class `t` predicted as `p`.
    pub fn count(&self, t: usize, p: usize) -> u64 {
        self.counts[t * self.k + p]
    }

    /// One row of counts for a true class.
    pub fn row(&self, t: usize) -> &[u64] {
        &self.counts[t * self.k..(t + 1) * self.k]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn check_scored(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::Contract("no scored samples".into()));
        }
        Ok(())
    }

    /// Fraction of correctly classified samples.
    pub fn accuracy(&self) -> Result<f64> {
        self.check_scored()?;
        let correct: u64 = (0..self.k).map(|c| self.count(c, c)).sum();
        Ok(correct as f64 / self.total() as f64)
    }

    /// Per-class precision/recall/F1 plus the accuracy, weighted-F1, and
    /// macro-F1 aggregates.
    pub fn report(&self) -> Result<ClassificationReport> {
        self.check_scored()?;
        let k = self.k;
        let total = self.total();
        let mut per_class = Vec::with_capacity(k);
        let mut weighted_f1 = 0.0;
        let mut macro_f1 = 0.0;
        // Same multiply-accumulate shape as the weighted sum so that with
        // balanced supports (support/total == 1/K) the two aggregates agree
        // bit for bit.
        let inv_k = 1.0 / k as f64;
        for c in 0..k {
            let tp = self.count(c, c);
            let support: u64 = self.row(c).iter().sum();
            let predicted: u64 = (0..k).map(|t| self.count(t, c)).sum();
            let precision = ratio_or_zero(tp, predicted);
            let recall = ratio_or_zero(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            weighted_f1 += support as f64 / total as f64 * f1;
            macro_f1 += inv_k * f1;
            per_class.push(ClassMetrics { precision, recall, f1, support });
        }
        Ok(ClassificationReport {
            accuracy: self.accuracy()?,
            per_class,
            weighted_f1,
            macro_f1,
        })
    }
}

fn ratio_or_zero(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics for a single class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Full per-class and aggregate metrics for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f1: f64,
    pub macro_f1: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = [0usize, 1, 2, 1, 0, 2, 2];
        let cm = confusion(&labels, &labels, 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                let want = if t == p {
                    labels.iter().filter(|&&l| l == t).count() as u64
                } else {
                    0
                };
                assert_eq!(cm.count(t, p), want);
            }
        }
        let rep = cm.report().unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.weighted_f1, 1.0);
        assert!(rep.per_class.iter().all(|c| c.f1 == 1.0));
    }

    #[test]
    fn hand_counted_two_class_matrix() {
        let cm = confusion(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!(cm.row(0), &[1, 1]);
        assert_eq!(cm.row(1), &[0, 1]);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn accuracy_hand_count() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 1], 3).unwrap();
        assert!((cm.accuracy().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn worked_report_example() {
        let cm = confusion(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        let rep = cm.report().unwrap();
        assert!((rep.per_class[0].precision - 1.0).abs() < 1e-12);
        assert!((rep.per_class[1].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((rep.per_class[0].recall - 0.5).abs() < 1e-12);
        assert!((rep.per_class[1].recall - 1.0).abs() < 1e-12);
        assert!((rep.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((rep.per_class[1].f1 - 0.8).abs() < 1e-12);
        assert!((rep.weighted_f1 - 0.73333).abs() < 1e-5);
    }

    #[test]
    fn absent_class_contributes_nothing() {
        // Class 2 never appears as label or prediction.
        let cm = confusion(&[0, 1, 0, 1], &[0, 1, 1, 0], 3).unwrap();
        let rep = cm.report().unwrap();
        let c2 = &rep.per_class[2];
        assert_eq!((c2.precision, c2.recall, c2.f1, c2.support), (0.0, 0.0, 0.0, 0));
        let without: f64 = rep.per_class[..2]
            .iter()
            .map(|c| c.support as f64 / 4.0 * c.f1)
            .sum();
        assert!((rep.weighted_f1 - without).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_class_rejected() {
        assert!(matches!(
            confusion(&[0, 2], &[0, 1], 2),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            confusion(&[0, 1], &[0, 5], 2),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(confusion(&[0, 1], &[0], 2).is_err());
    }

    #[test]
    fn empty_matrix_has_no_metrics() {
        let cm = confusion(&[], &[], 2).unwrap();
        assert!(cm.accuracy().is_err());
        assert!(cm.report().is_err());
    }

    #[test]
    fn balanced_supports_make_weighted_equal_macro() {
        let labels = [0usize, 0, 1, 1, 2, 2];
        let preds = [0usize, 1, 1, 1, 0, 2];
        let rep = confusion(&preds, &labels, 3).unwrap().report().unwrap();
        assert_eq!(rep.weighted_f1, rep.macro_f1);
    }
}
