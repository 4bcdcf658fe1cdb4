//! Logistic regression `correct ~ distance + in_hull + distance:in_hull`
//! fitted by iteratively reweighted least squares.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{invert, solve};

pub const COEFFICIENT_NAMES: [&str; 4] = ["intercept", "distance", "in_hull", "distance:in_hull"];
pub const MAX_ITERATIONS: usize = 100;
pub const CONVERGENCE_TOL: f64 = 1e-8;
pub const RIDGE_JITTER: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// In design order: intercept, z-scored distance, in_hull, interaction.
    pub coefficients: [f64; 4],
    pub standard_errors: [f64; 4],
    pub z_values: [f64; 4],
    pub converged: bool,
    pub iterations: usize,
    /// Mean and standard deviation used to z-score the distance.
    pub distance_mean: f64,
    pub distance_std: f64,
    /// Log-likelihood after each iteration, starting from the zero vector.
    pub log_likelihood: Vec<f64>,
}

/// Design matrix with columns `1, z(distance), in_hull, z(distance) * in_hull`.
/// A constant distance z-scores to zero.
pub fn design_matrix(distance: &[f64], in_hull: &[bool]) -> (Array2<f64>, f64, f64) {
    let m = distance.len();
    let mean = distance.iter().sum::<f64>() / m as f64;
    let var = distance.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / m as f64;
    let std = var.sqrt();
    let x = Array2::from_shape_fn((m, 4), |(i, j)| {
        let z = if std > 0.0 { (distance[i] - mean) / std } else { 0.0 };
        let h = if in_hull[i] { 1.0 } else { 0.0 };
        match j {
            0 => 1.0,
            1 => z,
            2 => h,
            _ => z * h,
        }
    });
    (x, mean, std)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn log_likelihood(x: &Array2<f64>, y: &[f64], beta: &Array1<f64>) -> f64 {
    let eta = x.dot(beta);
    eta.iter().zip(y).map(|(&e, &y)| y * e - softplus(e)).sum()
}

pub fn logistic_fit(distance: &[f64], in_hull: &[bool], correct: &[bool]) -> Result<LogisticFit> {
    let m = distance.len();
    if in_hull.len() != m {
        return Err(Error::dim("in_hull flags", m, in_hull.len()));
    }
    if correct.len() != m {
        return Err(Error::dim("correctness flags", m, correct.len()));
    }
    if m < 8 {
        return Err(Error::InvalidInput(format!("logistic fit needs at least 8 samples, got {m}")));
    }
    if distance.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("distances"));
    }
    if correct.iter().all(|&c| c) || correct.iter().all(|&c| !c) {
        return Err(Error::NonIdentifiable);
    }
    let (x, mean, std) = design_matrix(distance, in_hull);
    let y: Vec<f64> = correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();

    let mut beta = Array1::<f64>::zeros(4);
    let mut ll = log_likelihood(&x, &y, &beta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (grad, hess) = score_and_information(&x, &y, &beta);
        let Some(step) = solve(hess.view(), grad.as_slice().expect("contiguous")) else {
            break;
        };
        // Step halving keeps the log-likelihood monotone.
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood(&x, &y, &candidate);
        while cand_ll < ll && scale > 1e-10 {
            scale *= 0.5;
            candidate = &beta + &(&step * scale);
            cand_ll = log_likelihood(&x, &y, &candidate);
        }
        if cand_ll < ll {
            break;
        }
        let change = (&candidate - &beta).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        beta = candidate;
        ll = cand_ll;
        trace.push(ll);
        if change < CONVERGENCE_TOL {
            converged = true;
            break;
        }
    }

    let (_, hess) = score_and_information(&x, &y, &beta);
    let cov = invert(hess.view()).ok_or_else(|| Error::InvalidInput("information matrix is singular".into()))?;
    let mut coefficients = [0.0; 4];
    let mut standard_errors = [0.0; 4];
    let mut z_values = [0.0; 4];
    for k in 0..4 {
        coefficients[k] = beta[k];
        standard_errors[k] = cov[[k, k]].max(0.0).sqrt();
        z_values[k] = if standard_errors[k] > 0.0 {
            beta[k] / standard_errors[k]
        } else {
            0.0
        };
    }
    Ok(LogisticFit {
        coefficients,
        standard_errors,
        z_values,
        converged,
        iterations,
        distance_mean: mean,
        distance_std: std,
        log_likelihood: trace,
    })
}

/// Score `X^T (y - p)` and information `X^T W X + jitter I`.
fn score_and_information(x: &Array2<f64>, y: &[f64], beta: &Array1<f64>) -> (Array1<f64>, Array2<f64>) {
    let eta = x.dot(beta);
    let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let k = x.ncols();
    let mut grad = Array1::<f64>::zeros(k);
    let mut hess = Array2::<f64>::zeros((k, k));
    for (i, row) in x.rows().into_iter().enumerate() {
        let r = y[i] - p[i];
        let w = p[i] * (1.0 - p[i]);
        for a in 0..k {
            grad[a] += row[a] * r;
            for b in 0..k {
                hess[[a, b]] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        hess[[a, a]] += RIDGE_JITTER;
    }
    (grad, hess)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_positives_give_zero_intercept() {
        let d = vec![2.5; 20];
        let h = vec![false; 20];
        let c: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let f = logistic_fit(&d, &h, &c).unwrap();
        assert!(f.coefficients[0].abs() < 1e-6, "{:?}", f.coefficients);
        assert!(f.converged);
    }

    #[test]
    fn three_quarters_give_log_three() {
        let d = vec![1.0; 40];
        let h = vec![false; 40];
        let c: Vec<bool> = (0..40).map(|i| i % 4 != 0).collect();
        let f = logistic_fit(&d, &h, &c).unwrap();
        assert!((f.coefficients[0] - 3.0_f64.ln()).abs() < 1e-6, "{:?}", f.coefficients);
    }

    #[test]
    fn constant_response_is_not_identifiable() {
        let d: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(
            logistic_fit(&d, &[false; 10], &[true; 10]),
            Err(Error::NonIdentifiable)
        ));
        assert!(logistic_fit(&d[..5], &[false; 5], &[true, false, true, false, true]).is_err());
    }

    #[test]
    fn separable_data_still_returns() {
        let d: Vec<f64> = (0..30).map(f64::from).collect();
        let c: Vec<bool> = (0..30).map(|i| i < 15).collect();
        let f = logistic_fit(&d, &[false; 30], &c).unwrap();
        assert!(f.coefficients[1] < 0.0);
        assert!(f.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
    }
}
