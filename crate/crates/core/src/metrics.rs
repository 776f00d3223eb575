//! Regression metrics reported per target dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator guard for MAPE when an actual value is (near) zero.
pub const MAPE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
    /// Fraction, not percent.
    pub mape: f64,
    /// `None` when the actuals have zero variance.
    pub r2: Option<f64>,
}

/// MSE, MAE, MAPE and R^2, weight-normalized when `weights` is given.
pub fn evaluate(pred: &[f64], actual: &[f64], weights: Option<&[f64]>) -> Result<RegressionMetrics> {
    if pred.len() != actual.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(w) = weights {
        if w.len() != pred.len() {
            return Err(Error::InvalidArgument("weight length mismatch".into()));
        }
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total_w: f64 = (0..pred.len()).map(w).sum();
    let mean_y = (0..pred.len()).map(|i| w(i) * actual[i]).sum::<f64>() / total_w;

    let (mut sse, mut sae, mut sape, mut sst) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        let wi = w(i);
        let err = pred[i] - actual[i];
        sse += wi * err * err;
        sae += wi * err.abs();
        sape += wi * err.abs() / actual[i].abs().max(MAPE_EPSILON);
        let dev = actual[i] - mean_y;
        sst += wi * dev * dev;
    }
    Ok(RegressionMetrics {
        mse: sse / total_w,
        mae: sae / total_w,
        mape: sape / total_w,
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let y = [1.0, 2.0, 5.0];
        let m = evaluate(&y, &y, None).unwrap();
        assert_eq!((m.mse, m.mae, m.mape, m.r2), (0.0, 0.0, 0.0, Some(1.0)));
    }

    #[test]
    fn hand_example() {
        let m = evaluate(&[0.0, 0.0], &[3.0, 4.0], None).unwrap();
        assert_eq!(m.mse, 12.5);
        assert_eq!(m.mae, 3.5);
        assert_eq!(m.mape, 1.0);
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let y = [1.0, 2.0, 6.0];
        let m = evaluate(&[3.0; 3], &y, None).unwrap();
        assert!(m.r2.unwrap().abs() < 1e-15);
    }

    #[test]
    fn constant_actuals_leave_r2_undefined() {
        let m = evaluate(&[1.0, 2.0], &[3.0, 3.0], None).unwrap();
        assert!(m.r2.is_none());
        assert!(evaluate(&[], &[], None).is_err());
        assert!(evaluate(&[1.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn weights_normalize() {
        let m = evaluate(&[0.0, 0.0], &[3.0, 4.0], Some(&[1.0, 3.0])).unwrap();
        assert!((m.mse - 14.25).abs() < 1e-12);
        let zero_y = evaluate(&[1e-9], &[0.0], None).unwrap();
        assert!((zero_y.mape - 0.1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounds_and_shift_invariance(
            pairs in proptest::collection::vec((-100f64..100.0, -100f64..100.0), 2..50),
            c in -1e3f64..1e3,
        ) {
            let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = evaluate(&p, &y, None).unwrap();
            prop_assert!(m.mse >= 0.0 && m.mae >= 0.0 && m.mape >= 0.0);
            if let Some(r2) = m.r2 { prop_assert!(r2 <= 1.0); }
            let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            let s = evaluate(&ps, &ys, None).unwrap();
            prop_assert!((s.mse - m.mse).abs() <= 1e-9 * (1.0 + m.mse));
            prop_assert!((s.mae - m.mae).abs() <= 1e-9 * (1.0 + m.mae));
        }
    }
}
