//! Gaussian classification task with a controlled intrinsic dimension.
//!
//! Class centers are drawn in `n_id` dimensions, zero-padded to `n_input`
//! and rotated by a Haar-random orthogonal matrix. Samples are isotropic
//! normals around the embedded centers, with a common sigma tuned so that
//! the nearest-centroid rule reaches a target accuracy.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::linalg::householder_qr;
use crate::rng::{stream, stream_rng};

/// Bounds of the sigma search.
pub const SIGMA_RANGE: (f64, f64) = (1e-3, 1e3);
pub const CALIBRATION_DRAWS: usize = 10_000;
pub const CALIBRATION_TOLERANCE: f64 = 0.01;
pub const CALIBRATION_MAX_ITER: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySpec {
    pub n_id: usize,
    pub n_input: usize,
    pub n_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Fixed noise level; calibrated against `target_accuracy` when absent.
    pub sigma: Option<f64>,
    pub target_accuracy: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            n_id: 4,
            n_input: 32,
            n_classes: 10,
            train_per_class: 5000,
            test_per_class: 1000,
            sigma: None,
            target_accuracy: 0.70,
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_id == 0 || self.n_id > self.n_input {
            return Err(Error::InvalidConfig(format!(
                "intrinsic dimension {} must lie in [1, n_input = {}]",
                self.n_id, self.n_input
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if self.train_per_class == 0 {
            return Err(Error::InvalidConfig("train_per_class must be positive".into()));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("sigma {s} must be positive")));
            }
        } else {
            let chance = 1.0 / self.n_classes as f64;
            if !(self.target_accuracy > chance && self.target_accuracy < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "target accuracy {} must lie in ({chance}, 1)",
                    self.target_accuracy
                )));
            }
        }
        Ok(())
    }
}

/// A generated task together with the geometry that produced it.
#[derive(Clone, Debug)]
pub struct ToyTask {
    pub dataset: Dataset,
    pub sigma: f64,
    pub calibration: Option<SigmaCalibration>,
    /// `n_classes x n_id`, before embedding.
    pub centers_intrinsic: Array2<f64>,
    /// `n_classes x n_input`, after padding and rotation.
    pub centers: Array2<f64>,
    pub rotation: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaCalibration {
    pub sigma: f64,
    pub estimated_accuracy: f64,
    pub iterations: usize,
}

/// Haar-random orthogonal matrix from the QR factorization of a standard
/// normal matrix, with R's diagonal made nonnegative.
pub fn random_orthogonal(n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("orthogonal matrix size must be positive".into()));
    }
    let mut rng = stream_rng(seed, &[stream::ROTATION]);
    let a = Array2::from_shape_simple_fn((n, n), || rng.sample::<f64, _>(StandardNormal));
    let (q, _) = householder_qr(a.view());
    Ok(q)
}

pub fn gen_gaussian_task(spec: &ToySpec) -> Result<ToyTask> {
    spec.validate()?;
    let k = spec.n_classes;
    let mut rng = stream_rng(spec.seed, &[stream::CENTERS]);
    let centers_intrinsic = Array2::from_shape_simple_fn((k, spec.n_id), || rng.sample::<f64, _>(StandardNormal));
    let mut padded = Array2::<f64>::zeros((k, spec.n_input));
    padded.slice_mut(s![.., ..spec.n_id]).assign(&centers_intrinsic);
    let rotation = random_orthogonal(spec.n_input, spec.seed)?;
    // row vectors: x_embedded = Q x_padded
    let centers = padded.dot(&rotation.t());

    let (sigma, calibration) = match spec.sigma {
        Some(s) => (s, None),
        None => {
            let c = calibrate_sigma(centers.view(), spec.target_accuracy, spec.seed)?;
            (c.sigma, Some(c))
        }
    };

    let (train_x, train_y) = sample_classes(&centers, sigma, spec.train_per_class, spec.seed, stream::TRAIN_SAMPLES);
    let (test_x, test_y) = sample_classes(&centers, sigma, spec.test_per_class, spec.seed, stream::TEST_SAMPLES);
    let dataset = Dataset::new(
        train_x,
        train_y,
        test_x,
        test_y,
        k,
        Provenance::Toy {
            spec: spec.clone(),
            sigma,
        },
    )?;
    Ok(ToyTask {
        dataset,
        sigma,
        calibration,
        centers_intrinsic,
        centers,
        rotation,
    })
}

fn sample_classes(centers: &Array2<f64>, sigma: f64, per_class: usize, seed: u64, tag: u64) -> (Array2<f64>, Vec<usize>) {
    let (k, n) = centers.dim();
    let mut rng = stream_rng(seed, &[tag]);
    let mut x = Array2::<f64>::zeros((k * per_class, n));
    let mut y = Vec::with_capacity(k * per_class);
    for c in 0..k {
        for i in 0..per_class {
            let mut row = x.row_mut(c * per_class + i);
            for j in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                row[j] = centers[[c, j]] + sigma * z;
            }
            y.push(c);
        }
    }
    (x, y)
}

/// Monte Carlo accuracy of the nearest-centroid rule at noise level `sigma`.
/// Classes are visited round-robin; the noise draws depend only on `seed`.
pub fn nearest_centroid_accuracy(centers: ArrayView2<f64>, sigma: f64, draws: usize, seed: u64) -> f64 {
    let noise = calibration_noise(centers.ncols(), draws, seed);
    centroid_accuracy_with_noise(centers, sigma, &noise)
}

fn calibration_noise(dim: usize, draws: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream_rng(seed, &[stream::CALIBRATION]);
    Array2::from_shape_simple_fn((draws, dim), || rng.sample::<f64, _>(StandardNormal))
}

fn centroid_accuracy_with_noise(centers: ArrayView2<f64>, sigma: f64, noise: &Array2<f64>) -> f64 {
    let k = centers.nrows();
    let draws = noise.nrows();
    if draws == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for (i, z) in noise.rows().into_iter().enumerate() {
        let c = i % k;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..k {
            let d: f64 = z
                .iter()
                .zip(centers.row(c))
                .zip(centers.row(j))
                .map(|((&z, &cc), &cj)| {
                    let v = cc + sigma * z - cj;
                    v * v
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if best == c {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

/// Bisection (on a log scale) for the sigma at which nearest-centroid
/// accuracy matches `target_accuracy`. Every probe reuses the same noise
/// draws, so the accuracy curve is monotone up to Monte Carlo ties.
pub fn calibrate_sigma(centers: ArrayView2<f64>, target_accuracy: f64, seed: u64) -> Result<SigmaCalibration> {
    let k = centers.nrows();
    if k < 2 {
        return Err(Error::InvalidInput("calibration needs at least two centers".into()));
    }
    let chance = 1.0 / k as f64;
    if !(target_accuracy > chance && target_accuracy < 1.0) {
        return Err(Error::InvalidInput(format!(
            "target accuracy {target_accuracy} must lie in ({chance}, 1)"
        )));
    }
    let noise = calibration_noise(centers.ncols(), CALIBRATION_DRAWS, seed);
    let acc = |s: f64| centroid_accuracy_with_noise(centers, s, &noise);

    let (mut lo, mut hi) = SIGMA_RANGE;
    let acc_lo = acc(lo);
    let acc_hi = acc(hi);
    if !(acc_lo >= target_accuracy && acc_hi <= target_accuracy) {
        return Err(Error::Unbracketable {
            target: target_accuracy,
            low_sigma: lo,
            accuracy_low_sigma: acc_lo,
            high_sigma: hi,
            accuracy_high_sigma: acc_hi,
        });
    }
    let mut mid = (lo * hi).sqrt();
    let mut a = acc(mid);
    let mut iterations = 1;
    while (a - target_accuracy).abs() > CALIBRATION_TOLERANCE && iterations < CALIBRATION_MAX_ITER {
        if a > target_accuracy {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = (lo * hi).sqrt();
        a = acc(mid);
        iterations += 1;
    }
    Ok(SigmaCalibration {
        sigma: mid,
        estimated_accuracy: a,
        iterations,
    })
}
