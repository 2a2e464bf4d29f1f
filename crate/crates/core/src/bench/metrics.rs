//! Selection rates, ROC points and prediction error.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{NappError, Result};
use crate::glm::{Dataset, LossFamily};

/// `(tpr, fpr)`; each is `None` when its denominator is empty.
pub fn selection_rates(theta_hat: &[f64], theta_true: &[f64]) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (h, t) in theta_hat.iter().zip(theta_true) {
        if *t != 0.0 {
            pos += 1;
            tp += usize::from(*h != 0.0);
        } else {
            neg += 1;
            fp += usize::from(*h != 0.0);
        }
    }
    let rate = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    (rate(tp, pos), rate(fp, neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub fpr: f64,
    /// `None` when the truth has no nonzero coefficient.
    pub tpr: Option<f64>,
}

/// One point per `lambda`, averaged over repeats and sorted by fpr.
pub fn roc_curve(per_lambda: &[(f64, Vec<Vec<f64>>)], theta_true: &[f64]) -> Result<Vec<RocPoint>> {
    let mut points = Vec::with_capacity(per_lambda.len());
    for (lambda, fits) in per_lambda {
        if fits.is_empty() {
            return Err(NappError::InvalidParameter(format!(
                "no fits for lambda = {lambda}"
            )));
        }
        let mut fpr = 0.0;
        let mut tpr = Some(0.0);
        for fit in fits {
            if fit.len() != theta_true.len() {
                return Err(NappError::DimensionMismatch(
                    "fit and truth differ in p".into(),
                ));
            }
            let (t, f) = selection_rates(fit, theta_true);
            fpr += f.unwrap_or(0.0);
            tpr = tpr.zip(t).map(|(a, b)| a + b);
        }
        let k = fits.len() as f64;
        points.push(RocPoint {
            lambda: *lambda,
            fpr: fpr / k,
            tpr: tpr.map(|v| v / k),
        });
    }
    points.sort_by(|a, b| {
        a.fpr
            .total_cmp(&b.fpr)
            .then(a.tpr.unwrap_or(0.0).total_cmp(&b.tpr.unwrap_or(0.0)))
    });
    Ok(points)
}

/// Mean squared error of the predicted mean (linear, Poisson) or the
/// misclassification rate at threshold 1/2 (logistic).
pub fn prediction_error(theta_hat: &[f64], test: &Dataset) -> Result<f64> {
    if theta_hat.len() != test.p() {
        return Err(NappError::DimensionMismatch(format!(
            "theta has {} entries, p = {}",
            theta_hat.len(),
            test.p()
        )));
    }
    let eta = &test.x * DVector::from_column_slice(theta_hat);
    let n = test.n() as f64;
    let err = match test.family {
        LossFamily::Logistic => {
            eta.iter()
                .zip(test.y.iter())
                .filter(|(e, y)| (**e > 0.0) != (**y == 1.0))
                .count() as f64
                / n
        }
        family => {
            eta.iter()
                .zip(test.y.iter())
                .map(|(e, y)| (family.mean(*e) - y).powi(2))
                .sum::<f64>()
                / n
        }
    };
    Ok(err)
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
