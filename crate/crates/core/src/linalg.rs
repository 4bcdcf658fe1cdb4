//! Small dense linear algebra used by the generators, the simplex and IRLS.

use ndarray::{Array1, Array2, ArrayView2};

/// Householder QR of a square matrix. Returns `(Q, R)` with `A = QR`, `Q`
/// orthogonal and `R` upper triangular with a nonnegative diagonal.
pub fn householder_qr(a: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "householder_qr expects a square matrix");
    let mut r = a.to_owned();
    let mut q = Array2::<f64>::eye(n);

    for k in 0..n.saturating_sub(1) {
        let norm = (k..n).map(|i| r[[i, k]] * r[[i, k]]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[[k, k]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| r[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- H R
        for j in 0..n {
            let dot: f64 = (k..n).map(|i| v[i - k] * r[[i, j]]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in k..n {
                r[[i, j]] -= s * v[i - k];
            }
        }
        // Q <- Q H
        for i in 0..n {
            let dot: f64 = (k..n).map(|j| q[[i, j]] * v[j - k]).sum();
            let s = 2.0 * dot / vnorm2;
            for j in k..n {
                q[[i, j]] -= s * v[j - k];
            }
        }
    }

    for k in 0..n {
        if r[[k, k]] < 0.0 {
            for j in 0..n {
                r[[k, j]] = -r[[k, j]];
            }
            for i in 0..n {
                q[[i, k]] = -q[[i, k]];
            }
        }
        for i in (k + 1)..n {
            r[[i, k]] = 0.0;
        }
    }
    (q, r)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-300` in magnitude.
pub fn solve(a: ArrayView2<f64>, b: &[f64]) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut x = Array1::from(b.to_vec());
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))?;
        if m[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap([col, j], [pivot, j]);
            }
            x.swap(col, pivot);
        }
        for i in (col + 1)..n {
            let f = m[[i, col]] / m[[col, col]];
            if f != 0.0 {
                for j in col..n {
                    m[[i, j]] -= f * m[[col, j]];
                }
                x[i] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[[i, j]] * x[j]).sum();
        x[i] = (x[i] - s) / m[[i, i]];
    }
    Some(x)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))?;
        let p = m[[pivot, col]];
        if p.abs() < 1e-300 || !p.is_finite() {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap([col, j], [pivot, j]);
                inv.swap([col, j], [pivot, j]);
            }
        }
        let p = m[[col, col]];
        for j in 0..n {
            m[[col, j]] /= p;
            inv[[col, j]] /= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[[i, col]];
            if f != 0.0 {
                for j in 0..n {
                    m[[i, j]] -= f * m[[col, j]];
                    inv[[i, j]] -= f * inv[[col, j]];
                }
            }
        }
    }
    Some(inv)
}
