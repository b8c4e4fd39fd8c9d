//! Parameter error, prediction error and train/test splitting.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{check_dim, invalid, Result};
use crate::gaussian::GaussianParams;
use crate::math::{abs, sqrt};
use crate::rng::{self, tag};

/// `(‖μ̂ − μ*‖₁ + ‖Σ̂ − Σ*‖₁) / (I² + I)`.
pub fn l1_param_error(est: &GaussianParams, truth: &GaussianParams) -> Result<f64> {
    check_dim(truth.dim(), est.dim())?;
    let d = est.dim() as f64;
    Ok(est.l1_distance(truth) / (d * d + d))
}

/// `‖μ̂ − μ*‖₁ / I`, the mean-only error used when Σ is held fixed.
pub fn mean_abs_error(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_dim(truth.len(), est.len())?;
    if est.is_empty() {
        return Err(invalid("empty mean vector"));
    }
    Ok(est.iter().zip(truth).map(|(a, b)| abs(a - b)).sum::<f64>() / est.len() as f64)
}

/// Root-mean-square deviation of predicted choice probabilities from the
/// one-hot observed choices, over all (transaction, alternative) cells.
pub fn rmse_from_predictions(predictions: &[Vec<f64>], choices: &[usize]) -> Result<f64> {
    check_dim(predictions.len(), choices.len())?;
    if predictions.is_empty() {
        return Err(invalid("empty test set"));
    }
    let mut sum = 0.0;
    let mut cells = 0usize;
    for (p, &c) in predictions.iter().zip(choices) {
        if c >= p.len() {
            return Err(invalid("observed choice outside the predicted alternatives"));
        }
        for (j, pj) in p.iter().enumerate() {
            let y = if j == c { 1.0 } else { 0.0 };
            sum += (pj - y) * (pj - y);
        }
        cells += p.len();
    }
    Ok(sqrt(sum / cells as f64))
}

/// Shuffles `0..n` with the split seed and returns `(train, test)`, with
/// `round(n · train_fraction)` training indices, each part sorted.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(invalid("train_fraction must lie in [0, 1]"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[tag::SPLIT, n as u64]));
    let cut = libm::round(n as f64 * train_fraction) as usize;
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_metric() {
        let t = GaussianParams::from_slices(&[1.0], &[2.0]).unwrap();
        assert_eq!(l1_param_error(&t, &t).unwrap(), 0.0);
        let e = GaussianParams::from_slices(&[1.2], &[2.2]).unwrap();
        assert!((l1_param_error(&e, &t).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(l1_param_error(&e, &t).unwrap(), l1_param_error(&t, &e).unwrap());
        assert!(l1_param_error(&e, &GaussianParams::standard(2)).is_err());
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse_from_predictions(&[alloc::vec![0.0, 1.0]], &[1]).unwrap(), 0.0);
        let preds = alloc::vec![alloc::vec![0.5, 0.5]; 3];
        assert!((rmse_from_predictions(&preds, &[0, 1, 1]).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse_from_predictions(&[], &[]).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let (tr, te) = train_test_split(100, 0.8, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(train_test_split(100, 0.8, 3).unwrap().0, tr);
    }
}
