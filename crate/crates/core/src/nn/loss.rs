use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the logarithm,
/// so the binary cross-entropy is always finite.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Binary cross-entropy over sigmoid outputs, averaged over components.
    Bce,
    /// Mean squared error.
    Mse,
    /// Softmax cross-entropy over raw scores (log-sum-exp inside).
    CrossEntropy,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }

    /// Target vector the loss expects for a class label and a network output width.
    ///
    /// BCE and MSE on a single output use the label itself as the target value;
    /// MSE on wider outputs uses one-hot; cross-entropy takes the class index.
    pub fn target_for_label(self, label: usize, out_width: usize) -> Vec<f64> {
        match self {
            LossKind::CrossEntropy => vec![label as f64],
            LossKind::Bce | LossKind::Mse if out_width == 1 => vec![label as f64],
            LossKind::Bce | LossKind::Mse => {
                let mut t = vec![0.0; out_width];
                if label < out_width {
                    t[label] = 1.0;
                }
                t
            }
        }
    }
}

fn check_width(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::contract(format!(
            "prediction width {} and target width {} differ",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Normalizes a cross-entropy target (class index or distribution) into a distribution.
fn ce_distribution(width: usize, target: &[f64]) -> Result<Vec<f64>> {
    if target.len() == width && width > 1 {
        return Ok(target.to_vec());
    }
    if target.len() == 1 {
        let c = target[0];
        if c >= 0.0 && c.fract() == 0.0 && (c as usize) < width {
            let mut d = vec![0.0; width];
            d[c as usize] = 1.0;
            return Ok(d);
        }
        return Err(Error::contract(format!(
            "class index {c} invalid for {width} classes"
        )));
    }
    Err(Error::contract(format!(
        "cross-entropy target of width {} for {width} scores",
        target.len()
    )))
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(s);
    s.iter().map(|v| (v - lse).exp()).collect()
}

fn check_bce(pred: &[f64], target: &[f64]) -> Result<()> {
    if let Some(p) = pred.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("BCE prediction {p} outside [0, 1]")));
    }
    if let Some(t) = target.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("BCE target {t} outside [0, 1]")));
    }
    Ok(())
}

pub fn loss_value(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<f64> {
    match kind {
        LossKind::Bce => {
            check_width(pred, target)?;
            check_bce(pred, target)?;
            let n = pred.len() as f64;
            Ok(pred
                .iter()
                .zip(target)
                .map(|(&p, &t)| {
                    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n)
        }
        LossKind::Mse => {
            check_width(pred, target)?;
            let n = pred.len() as f64;
            Ok(pred
                .iter()
                .zip(target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n)
        }
        LossKind::CrossEntropy => {
            let dist = ce_distribution(pred.len(), target)?;
            let lse = log_sum_exp(pred);
            let mass: f64 = dist.iter().sum();
            let dot: f64 = dist.iter().zip(pred).map(|(t, s)| t * s).sum();
            Ok((lse * mass - dot).max(0.0))
        }
    }
}

/// Gradient of [`loss_value`] with respect to the prediction vector.
pub fn loss_gradient(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    match kind {
        LossKind::Bce => {
            check_width(pred, target)?;
            check_bce(pred, target)?;
            let n = pred.len() as f64;
            Ok(pred
                .iter()
                .zip(target)
                .map(|(&p, &t)| {
                    if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                        (p - t) / (p * (1.0 - p)) / n
                    } else {
                        0.0
                    }
                })
                .collect())
        }
        LossKind::Mse => {
            check_width(pred, target)?;
            let n = pred.len() as f64;
            Ok(pred
                .iter()
                .zip(target)
                .map(|(p, t)| 2.0 * (p - t) / n)
                .collect())
        }
        LossKind::CrossEntropy => {
            let dist = ce_distribution(pred.len(), target)?;
            let mass: f64 = dist.iter().sum();
            Ok(softmax(pred)
                .iter()
                .zip(&dist)
                .map(|(s, t)| s * mass - t)
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_at_half_is_ln2() {
        let l = loss_value(LossKind::Bce, &[0.5], &[1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mse_of_identical_vectors_is_zero() {
        assert_eq!(
            loss_value(LossKind::Mse, &[0.2, 0.4], &[0.2, 0.4]).unwrap(),
            0.0
        );
    }

    #[test]
    fn cross_entropy_uniform_scores() {
        let l = loss_value(LossKind::CrossEntropy, &[0.0; 4], &[2.0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let onehot = loss_value(LossKind::CrossEntropy, &[0.0; 4], &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((onehot - l).abs() < 1e-15);
    }

    #[test]
    fn bce_is_finite_at_the_edges() {
        let l = loss_value(LossKind::Bce, &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(l.is_finite());
        assert!((l + BCE_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn bce_rejects_out_of_domain_predictions() {
        assert!(matches!(
            loss_value(LossKind::Bce, &[1.5], &[1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            loss_value(LossKind::Bce, &[f64::NAN], &[1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn cross_entropy_survives_large_scores() {
        for s in [1e3, -1e3] {
            let pred = [s, 0.0, -s];
            for c in 0..3 {
                let l = loss_value(LossKind::CrossEntropy, &pred, &[c as f64]).unwrap();
                assert!(l.is_finite());
                let g = loss_gradient(LossKind::CrossEntropy, &pred, &[c as f64]).unwrap();
                assert!(g.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_class() {
        assert!(loss_value(LossKind::CrossEntropy, &[0.0; 3], &[3.0]).is_err());
        assert!(loss_value(LossKind::CrossEntropy, &[0.0; 3], &[0.5]).is_err());
    }

    #[test]
    fn width_mismatch_is_a_contract_error() {
        assert!(matches!(
            loss_value(LossKind::Mse, &[0.0, 1.0], &[0.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn targets_for_labels() {
        assert_eq!(LossKind::Bce.target_for_label(1, 1), vec![1.0]);
        assert_eq!(LossKind::Mse.target_for_label(1, 3), vec![0.0, 1.0, 0.0]);
        assert_eq!(LossKind::CrossEntropy.target_for_label(2, 4), vec![2.0]);
    }
}
