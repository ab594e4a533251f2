//! Confusion matrices and the scores derived from them.
//!
//! Precision, recall and F1 of a class with a zero denominator are taken as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<ConfusionMatrix> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::contract("confusion counts must be square"));
        }
        Ok(ConfusionMatrix {
            num_classes: k,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.num_classes;
        if truth >= k || predicted >= k {
            return Err(Error::contract(format!(
                "class pair ({truth}, {predicted}) outside {k} classes"
            )));
        }
        self.counts[truth * k + predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|t| self.get(t, class)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.num_classes.max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }

    fn non_empty(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::contract("metrics of an empty confusion matrix")),
            n => Ok(n as f64),
        }
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(k);
    for (&p, &t) in preds.iter().zip(labels) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(cm.trace() as f64 / cm.non_empty()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn per_class(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..cm.num_classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support: cm.support(c),
            }
        })
        .collect()
}

/// Support-weighted mean of the per-class F1 scores.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.non_empty()?;
    Ok(per_class(cm)
        .iter()
        .map(|s| s.support as f64 / total * s.f1)
        .sum())
}

/// Unweighted mean of per-class F1, over every class index.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.non_empty()?;
    let scores = per_class(cm);
    Ok(scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub mean_loss: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix, mean_loss: f64) -> Result<MetricsReport> {
        Ok(MetricsReport {
            accuracy: accuracy(&confusion)?,
            weighted_f1: weighted_f1(&confusion)?,
            per_class: per_class(&confusion),
            mean_loss,
            confusion,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 0], vec![0, 1]]);
        let cm = confusion(&[1, 1], &[0, 1], 2).unwrap();
        assert_eq!((cm.get(0, 1), cm.get(1, 1)), (1, 1));
        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let diag = ConfusionMatrix::from_counts(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(accuracy(&diag).unwrap(), 1.0);
        let wrong = ConfusionMatrix::from_counts(&[vec![0, 1], vec![0, 0]]).unwrap();
        assert_eq!(accuracy(&wrong).unwrap(), 0.0);
        assert!(accuracy(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn weighted_f1_examples() {
        let half = ConfusionMatrix::from_counts(&[vec![1, 1], vec![1, 1]]).unwrap();
        assert!((weighted_f1(&half).unwrap() - 0.5).abs() < 1e-15);
        let perfect =
            ConfusionMatrix::from_counts(&[vec![7, 0, 0], vec![0, 1, 0], vec![0, 0, 30]]).unwrap();
        assert_eq!(weighted_f1(&perfect).unwrap(), 1.0);
        let always_wrong = ConfusionMatrix::from_counts(&[vec![0, 3], vec![5, 0]]).unwrap();
        assert_eq!(weighted_f1(&always_wrong).unwrap(), 0.0);
        assert!(weighted_f1(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn macro_f1_counts_absent_classes() {
        let cm = ConfusionMatrix::from_counts(&[vec![2, 0], vec![0, 0]]).unwrap();
        assert_eq!(macro_f1(&cm).unwrap(), 0.5);
        assert_eq!(weighted_f1(&cm).unwrap(), 1.0);
    }
}
