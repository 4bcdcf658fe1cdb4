use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`, evaluated at
/// every observed value.
pub fn ks_statistic(sample_a: &[f64], sample_b: &[f64]) -> Result<KsResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample_a.iter().chain(sample_b).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("KS sample"));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        n_a: a.len(),
        n_b: b.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let s = [3.0, 1.0, 2.0, 2.0];
        assert_eq!(ks_statistic(&s, &s).unwrap().statistic, 0.0);
    }

    #[test]
    fn disjoint_supports() {
        assert_eq!(ks_statistic(&[1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap().statistic, 1.0);
    }

    #[test]
    fn interleaved_thirds() {
        let r = ks_statistic(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.n_a, r.n_b), (3, 3));
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(ks_statistic(&[], &[1.0]), Err(Error::EmptySample)));
    }
}
