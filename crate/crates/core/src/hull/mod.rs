//! Convex-hull membership by linear-programming feasibility.
//!
//! A query `q` lies in the hull of generators `x_1..x_N` iff some `lambda >= 0`
//! with `sum lambda = 1` satisfies `sum lambda_i x_i = q`. That system has
//! `D + 1` rows and `N` columns and is solved with a phase-1 simplex.

mod simplex;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use simplex::{phase1, phase1_simplex, ColumnMatrix, Phase1Outcome, ITERATION_CAP_FACTOR};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct HullQuery {
    pub query_point: Vec<f64>,
    pub generators: Array2<f64>,
    pub tolerance: f64,
}

/// Membership verdict with a constructive witness when inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullCertificate {
    pub inside: bool,
    /// Nonzero convex weights `(generator index, weight)`; empty when outside.
    pub weights: Vec<(usize, f64)>,
    /// Reconstruction error `max|sum lambda_i x_i - q|` when inside; the
    /// phase-1 optimum when outside.
    pub residual: f64,
    pub iterations: usize,
}

impl HullCertificate {
    /// Dense weight vector over all `n` generators (present iff inside).
    pub fn lambda(&self, n: usize) -> Option<Vec<f64>> {
        self.inside.then(|| {
            let mut l = vec![0.0; n];
            for &(i, w) in &self.weights {
                l[i] = w;
            }
            l
        })
    }
}

/// Generators preprocessed for repeated membership queries.
#[derive(Clone, Debug)]
pub struct HullTester {
    columns: ColumnMatrix,
    dim: usize,
    tolerance: f64,
}

impl HullTester {
    pub fn new(generators: ArrayView2<f64>, tolerance: f64) -> Result<Self> {
        let (n, d) = generators.dim();
        if n == 0 {
            return Err(Error::InvalidInput("convex hull needs at least one generator".into()));
        }
        if d == 0 {
            return Err(Error::InvalidInput("convex hull needs dimension at least one".into()));
        }
        if !(tolerance >= 0.0 && tolerance.is_finite()) {
            return Err(Error::InvalidInput(format!("tolerance {tolerance} must be finite and nonnegative")));
        }
        let mut data = Vec::with_capacity(n * (d + 1));
        for row in generators.rows() {
            data.extend(row.iter().copied());
            data.push(1.0);
        }
        Ok(Self {
            columns: ColumnMatrix::from_column_major(data, d + 1, n)?,
            dim: d,
            tolerance,
        })
    }

    pub fn generators(&self) -> usize {
        self.columns.cols()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, query: &[f64]) -> Result<HullCertificate> {
        if query.len() != self.dim {
            return Err(Error::dim("hull query dimension", self.dim, query.len()));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hull query"));
        }
        let mut b = query.to_vec();
        b.push(1.0);
        let b_norm = b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        // The phase-1 optimum bounds every row residual, so demanding it be
        // below `tolerance` gives the certificate bounds directly.
        let out = phase1(&self.columns, &b, self.tolerance / (1.0 + b_norm))?;
        if !out.feasible {
            return Ok(HullCertificate {
                inside: false,
                weights: Vec::new(),
                residual: out.objective,
                iterations: out.iterations,
            });
        }
        let cert = HullCertificate {
            inside: true,
            residual: reconstruction_error(&self.columns, &out.support, query),
            weights: out.support,
            iterations: out.iterations,
        };
        if !certificate_holds(&cert, query, self.tolerance) {
            return Ok(HullCertificate {
                inside: false,
                weights: Vec::new(),
                residual: cert.residual,
                iterations: cert.iterations,
            });
        }
        Ok(cert)
    }
}

fn reconstruction_error(cols: &ColumnMatrix, support: &[(usize, f64)], q: &[f64]) -> f64 {
    let d = q.len();
    let mut acc = vec![0.0; d];
    for &(j, w) in support {
        for (a, x) in acc.iter_mut().zip(&cols.column(j)[..d]) {
            *a += w * x;
        }
    }
    acc.iter().zip(q).fold(0.0_f64, |r, (a, b)| r.max((a - b).abs()))
}

/// Checks the stated invariants of an inside certificate.
pub fn certificate_holds(cert: &HullCertificate, query: &[f64], tolerance: f64) -> bool {
    if !cert.inside {
        return true;
    }
    let q_norm = query.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let sum: f64 = cert.weights.iter().map(|&(_, w)| w).sum();
    cert.weights.iter().all(|&(_, w)| w >= 0.0)
        && cert.residual <= tolerance * (1.0 + q_norm)
        && (sum - 1.0).abs() <= tolerance
}

pub fn in_hull(query: &HullQuery) -> Result<HullCertificate> {
    HullTester::new(query.generators.view(), query.tolerance)?.contains(&query.query_point)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullRecord {
    pub inside: bool,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullFraction {
    pub fraction: f64,
    pub records: Vec<HullRecord>,
    /// Generators actually used (after optional subsampling).
    pub generators_used: usize,
}

impl HullFraction {
    pub fn inside(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.inside).collect()
    }
}

/// Fraction of `test_points` inside the hull of `train_points`. Queries run
/// in parallel on the current rayon pool; results keep input order.
pub fn hull_fraction(test_points: ArrayView2<f64>, train_points: ArrayView2<f64>, tolerance: f64) -> Result<HullFraction> {
    if test_points.ncols() != train_points.ncols() {
        return Err(Error::dim("hull test point dimension", train_points.ncols(), test_points.ncols()));
    }
    let tester = HullTester::new(train_points, tolerance)?;
    let rows: Vec<Vec<f64>> = test_points.rows().into_iter().map(|r| r.to_vec()).collect();
    let records = rows
        .par_iter()
        .map(|q| {
            tester.contains(q).map(|c| HullRecord {
                inside: c.inside,
                residual: c.residual,
                iterations: c.iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fraction = if records.is_empty() {
        0.0
    } else {
        records.iter().filter(|r| r.inside).count() as f64 / records.len() as f64
    };
    Ok(HullFraction {
        fraction,
        records,
        generators_used: tester.generators(),
    })
}

/// Uniform subsample of at most `max_rows` rows, in original order.
pub fn subsample_rows(points: ArrayView2<f64>, max_rows: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let n = points.nrows();
    if max_rows >= n {
        return (points.to_owned(), (0..n).collect());
    }
    let mut rng = stream_rng(seed, &[stream::SUBSAMPLE]);
    let mut idx = sample(&mut rng, n, max_rows).into_vec();
    idx.sort_unstable();
    (points.select(Axis(0), &idx), idx)
}
