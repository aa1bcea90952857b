//! Error metrics over paired prediction / truth series.

use crate::error::{Error, Result};

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty series"));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok((sse(pred, truth) / pred.len() as f64).sqrt())
}

pub(crate) fn sse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum()
}

/// `MAE / mean(truth)`; `None` when the truth has zero mean.
pub fn relative_mae(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check(pred, truth)?;
    let n = pred.len() as f64;
    let mean_t = truth.iter().sum::<f64>() / n;
    if mean_t <= 0.0 {
        return Ok(None);
    }
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok(Some(mae / mean_t))
}

/// Sample Pearson correlation; `None` when either series is constant.
pub fn pearson_r(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    check(pred, truth)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (a, b) = (p - mp, t - mt);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(relative_mae(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), Some(1.0));
        assert_eq!(relative_mae(&[2.0, 4.0], &[0.0, 0.0]).unwrap(), None);
        let t = [1.0, 3.0, 2.0, 5.0];
        assert!((pearson_r(&t, &t).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| 7.0 - v).collect();
        assert!((pearson_r(&neg, &t).unwrap().unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), None);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }
}
