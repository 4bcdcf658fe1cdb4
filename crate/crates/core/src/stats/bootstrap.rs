use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }

    pub fn excludes_zero(&self) -> bool {
        !self.contains(0.0)
    }
}

/// Mean computed as an offset from the first value, so constant inputs
/// return that constant exactly.
pub fn shifted_mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return f64::NAN;
    };
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<Interval> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if resamples == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} must lie in (0, 1)")));
    }
    let n = values.len();
    let mut rng = stream_rng(seed, &[stream::BOOTSTRAP]);
    let mut buf = vec![0.0; n];
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..n)];
            }
            shifted_mean(&buf)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval {
        low: percentile_sorted(&means, alpha),
        high: percentile_sorted(&means, 1.0 - alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values() {
        let ci = bootstrap_ci(&[0.1; 7], 200, 0.95, 3).unwrap();
        assert_eq!((ci.low, ci.high), (0.1, 0.1));
    }

    #[test]
    fn same_seed_same_interval() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert_eq!(bootstrap_ci(&v, 500, 0.95, 9).unwrap(), bootstrap_ci(&v, 500, 0.95, 9).unwrap());
        assert_ne!(bootstrap_ci(&v, 500, 0.95, 9).unwrap(), bootstrap_ci(&v, 500, 0.95, 10).unwrap());
    }

    #[test]
    fn percentile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&s, 0.5), 2.0);
        assert_eq!(percentile_sorted(&s, 0.125), 0.5);
        assert_eq!(percentile_sorted(&s, 1.0), 4.0);
    }

    #[test]
    fn bad_arguments() {
        assert!(bootstrap_ci(&[], 10, 0.95, 0).is_err());
        assert!(bootstrap_ci(&[1.0], 0, 0.95, 0).is_err());
        assert!(bootstrap_ci(&[1.0], 10, 1.0, 0).is_err());
    }
}
