//! Phase-1 revised simplex for `{x >= 0 : A x = b}`.
//!
//! One artificial variable per row starts in the basis; the sum of
//! artificials is minimized with Bland's rule (lowest-index entering column,
//! lowest-index leaving variable among ratio ties). The basis inverse is kept
//! explicitly (`m x m`, `m` small) and rebuilt from scratch periodically.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::linalg::invert;

/// Rows are refactored after this many pivots.
const REINVERT_EVERY: usize = 64;
/// Multiplier of `m + n` for the iteration cap.
pub const ITERATION_CAP_FACTOR: usize = 50;

/// Constraint matrix stored column by column, so pricing a column reads
/// contiguous memory.
#[derive(Clone, Debug)]
pub struct ColumnMatrix {
    data: Vec<f64>,
    m: usize,
    n: usize,
    max_abs: f64,
}

impl ColumnMatrix {
    pub fn from_rows(a: ArrayView2<f64>) -> Result<Self> {
        let (m, n) = a.dim();
        let mut data = Vec::with_capacity(m * n);
        for j in 0..n {
            data.extend(a.column(j).iter().copied());
        }
        Self::from_column_major(data, m, n)
    }

    /// `data[j * m + i]` is entry `(i, j)`.
    pub fn from_column_major(data: Vec<f64>, m: usize, n: usize) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::dim("column-major matrix length", m * n, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("constraint matrix"));
        }
        let max_abs = data.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Ok(Self { data, m, n, max_abs })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.m..(j + 1) * self.m]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phase1Outcome {
    pub feasible: bool,
    /// Sparse solution: `(column, value)` pairs with positive values.
    pub support: Vec<(usize, f64)>,
    /// Optimal sum of artificial variables.
    pub objective: f64,
    /// `max |A x - b|` of the returned point.
    pub residual: f64,
    pub iterations: usize,
}

impl Phase1Outcome {
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for &(j, v) in &self.support {
            x[j] = v;
        }
        x
    }
}

/// Dense convenience wrapper around [`phase1`].
pub fn phase1_simplex(a: ArrayView2<f64>, b: &[f64], tolerance: f64) -> Result<Phase1Outcome> {
    let cols = ColumnMatrix::from_rows(a)?;
    phase1(&cols, b, tolerance)
}

/// Feasible iff the phase-1 optimum is at most `tolerance * (1 + max|b|)`.
pub fn phase1(a: &ColumnMatrix, b: &[f64], tolerance: f64) -> Result<Phase1Outcome> {
    let (m, n) = (a.m, a.n);
    if b.len() != m {
        return Err(Error::dim("right-hand side length", m, b.len()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tolerance} must be nonnegative")));
    }
    let b_norm = b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if m == 0 {
        return Ok(Phase1Outcome {
            feasible: true,
            support: Vec::new(),
            objective: 0.0,
            residual: 0.0,
            iterations: 0,
        });
    }

    let mut solver = Solver::new(a, b);
    let cap = ITERATION_CAP_FACTOR * (m + n);
    solver.run(cap)?;
    solver.reinvert();

    let objective: f64 = solver
        .basis
        .iter()
        .zip(&solver.x_b)
        .filter(|(&v, _)| v >= n)
        .map(|(_, &x)| x.max(0.0))
        .sum();
    let feasible = objective <= tolerance * (1.0 + b_norm);

    let mut support: Vec<(usize, f64)> = solver
        .basis
        .iter()
        .zip(&solver.x_b)
        .filter(|(&v, &x)| v < n && x > 0.0)
        .map(|(&v, &x)| (v, x))
        .collect();
    support.sort_by_key(|&(j, _)| j);

    let mut ax = vec![0.0; m];
    for &(j, v) in &support {
        for (acc, aij) in ax.iter_mut().zip(a.column(j)) {
            *acc += aij * v;
        }
    }
    let residual = ax.iter().zip(b).fold(0.0_f64, |r, (u, v)| r.max((u - v).abs()));

    Ok(Phase1Outcome {
        feasible,
        support,
        objective,
        residual,
        iterations: solver.iterations,
    })
}

struct Solver<'a> {
    a: &'a ColumnMatrix,
    /// Row signs making the right-hand side nonnegative.
    sign: Vec<f64>,
    rhs: Vec<f64>,
    /// Basic variable per row; indices `>= n` are artificials.
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    x_b: Vec<f64>,
    iterations: usize,
    since_reinvert: usize,
}

impl<'a> Solver<'a> {
    fn new(a: &'a ColumnMatrix, b: &[f64]) -> Self {
        let m = a.m;
        let sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = b.iter().map(|v| v.abs()).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        Self {
            a,
            sign,
            x_b: rhs.clone(),
            rhs,
            basis: (a.n..a.n + m).collect(),
            is_basic: vec![false; a.n],
            binv,
            iterations: 0,
            since_reinvert: 0,
        }
    }

    /// Column `j` of the sign-normalized system (artificials are unit vectors).
    fn column_into(&self, j: usize, out: &mut [f64]) {
        let m = self.a.m;
        if j < self.a.n {
            for ((o, v), s) in out.iter_mut().zip(self.a.column(j)).zip(&self.sign) {
                *o = v * s;
            }
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[j - self.a.n] = 1.0;
        }
        debug_assert_eq!(out.len(), m);
    }

    fn run(&mut self, cap: usize) -> Result<()> {
        let m = self.a.m;
        let n = self.a.n;
        let d_tol = 1e-11 * self.a.max_abs.max(1.0);
        let mut y = vec![0.0; m];
        let mut ys = vec![0.0; m];
        let mut col = vec![0.0; m];
        let mut u = vec![0.0; m];

        loop {
            if self.basis.iter().all(|&v| v < n) {
                return Ok(());
            }
            // y = c_B^T B^-1 with c_B = 1 on artificials
            y.iter_mut().for_each(|v| *v = 0.0);
            for (i, &v) in self.basis.iter().enumerate() {
                if v >= n {
                    let row = &self.binv[i * m..(i + 1) * m];
                    for (yk, r) in y.iter_mut().zip(row) {
                        *yk += r;
                    }
                }
            }
            for k in 0..m {
                ys[k] = y[k] * self.sign[k];
            }

            // Bland: first column with negative reduced cost -y.a_j
            let entering = (0..n).find(|&j| {
                !self.is_basic[j] && {
                    let dot: f64 = ys.iter().zip(self.a.column(j)).map(|(y, a)| y * a).sum();
                    -dot < -d_tol
                }
            });
            let Some(j) = entering else {
                return Ok(());
            };
            if self.iterations >= cap {
                return Err(Error::IterationCap { cap });
            }

            self.column_into(j, &mut col);
            for (ui, row) in u.iter_mut().zip(self.binv.chunks_exact(m)) {
                *ui = row.iter().zip(&col).map(|(r, c)| r * c).sum();
            }
            let u_max = u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let p_tol = 1e-9 * u_max.max(1e-300);

            let mut leave: Option<(usize, f64)> = None;
            for (i, &ui) in u.iter().enumerate() {
                if ui > p_tol {
                    let ratio = self.x_b[i].max(0.0) / ui;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * best.abs().max(1e-300);
                            if ratio < best && !tie || tie && self.basis[i] < self.basis[r] {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, theta)) = leave else {
                // The phase-1 objective is bounded below; only numerical
                // breakdown gets here.
                if self.since_reinvert > 0 {
                    self.reinvert();
                    continue;
                }
                return Err(Error::InvalidInput("phase-1 simplex lost numerical stability".into()));
            };

            for (i, (x, &ui)) in self.x_b.iter_mut().zip(&u).enumerate() {
                if i != r {
                    *x = (*x - theta * ui).max(0.0);
                }
            }
            self.x_b[r] = theta;
            let ur = u[r];
            {
                let (before, rest) = self.binv.split_at_mut(r * m);
                let (pivot_row, after) = rest.split_at_mut(m);
                pivot_row.iter_mut().for_each(|v| *v /= ur);
                for (i, row) in before.chunks_exact_mut(m).chain(after.chunks_exact_mut(m)).enumerate() {
                    let ui = if i < r { u[i] } else { u[i + 1] };
                    if ui != 0.0 {
                        for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                            *v -= ui * p;
                        }
                    }
                }
            }
            let old = self.basis[r];
            if old < n {
                self.is_basic[old] = false;
            }
            self.basis[r] = j;
            self.is_basic[j] = true;
            self.iterations += 1;
            self.since_reinvert += 1;
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert();
            }
        }
    }

    /// Rebuilds `B^-1` and `x_B` from the current basis.
    fn reinvert(&mut self) {
        let m = self.a.m;
        let mut bmat = ndarray::Array2::<f64>::zeros((m, m));
        let mut col = vec![0.0; m];
        for (k, &v) in self.basis.iter().enumerate() {
            self.column_into(v, &mut col);
            for i in 0..m {
                bmat[[i, k]] = col[i];
            }
        }
        if let Some(inv) = invert(bmat.view()) {
            for i in 0..m {
                for k in 0..m {
                    self.binv[i * m + k] = inv[[i, k]];
                }
                self.x_b[i] = (0..m).map(|k| inv[[i, k]] * self.rhs[k]).sum::<f64>().max(0.0);
            }
        }
        self.since_reinvert = 0;
    }
}
