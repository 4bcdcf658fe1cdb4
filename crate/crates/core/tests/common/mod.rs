//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use latentprobe::nn::{Activation, LayerSpec, Loss, Mode, Network, Targets};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(rand_distr::StandardNormal))
}

/// Random network with at most three layers of width at most eight. Softmax
/// outputs train on labels, linear outputs on regression targets. Biases
/// are randomized so that no pre-activation sits exactly on the relu kink,
/// where finite differences are one-sided.
pub fn random_network(rng: &mut ChaCha8Rng, seed: u64) -> (Network, Loss) {
    let input = rng.random_range(1..=8);
    let depth = rng.random_range(1..=3);
    let mut layers = Vec::new();
    for _ in 0..depth - 1 {
        let act = if rng.random_bool(0.7) { Activation::Relu } else { Activation::Linear };
        let p = if rng.random_bool(0.3) { 0.3 } else { 0.0 };
        layers.push(LayerSpec::new(rng.random_range(1..=8), act, p));
    }
    let softmax = rng.random_bool(0.5);
    let out = rng.random_range(2..=8);
    let (last, loss) = if softmax {
        (LayerSpec::softmax(out), Loss::CrossEntropy)
    } else {
        (LayerSpec::linear(out), Loss::MeanSquaredError)
    };
    layers.push(last);
    let mut net = Network::new(input, layers, 0, seed).unwrap();
    for layer in net.params_mut().unwrap() {
        layer.bias.mapv_inplace(|_| rng.sample::<f64, _>(rand_distr::StandardNormal));
    }
    (net, loss)
}

/// Largest relative gap between backprop and central finite differences
/// (step `h`) over every parameter, for a fixed dropout mask.
pub fn finite_difference_gap(net: &Network, x: &Array2<f64>, targets: Targets, loss: Loss, mode: Mode, h: f64) -> f64 {
    let pass = net.forward(x.view(), mode).unwrap();
    let grads = net.backward(&pass, targets, loss).unwrap();
    let eval = |n: &Network| {
        let p = n.forward(x.view(), mode).unwrap();
        n.loss(&p, targets, loss).unwrap()
    };
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let mut worst = 0.0_f64;
    let mut probe = net.clone();
    for l in 0..net.params().len() {
        let (rows, cols) = net.params()[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let orig = net.params()[l].weights[[i, j]];
                probe.params_mut().unwrap()[l].weights[[i, j]] = orig + h;
                let up = eval(&probe);
                probe.params_mut().unwrap()[l].weights[[i, j]] = orig - h;
                let down = eval(&probe);
                probe.params_mut().unwrap()[l].weights[[i, j]] = orig;
                worst = worst.max(rel(grads.weights[l][[i, j]], (up - down) / (2.0 * h)));
            }
        }
        for j in 0..net.params()[l].bias.len() {
            let orig = net.params()[l].bias[j];
            probe.params_mut().unwrap()[l].bias[j] = orig + h;
            let up = eval(&probe);
            probe.params_mut().unwrap()[l].bias[j] = orig - h;
            let down = eval(&probe);
            probe.params_mut().unwrap()[l].bias[j] = orig;
            worst = worst.max(rel(grads.biases[l][j], (up - down) / (2.0 * h)));
        }
    }
    worst
}

/// Finite-difference gap of one random network and batch.
pub fn random_backprop_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (net, loss) = random_network(&mut r, seed);
    let batch = r.random_range(1..=6);
    let x = normal_matrix(&mut r, batch, net.input_dim());
    let labels: Vec<usize> = (0..batch).map(|_| r.random_range(0..net.output_dim())).collect();
    let y = normal_matrix(&mut r, batch, net.output_dim());
    let targets = match loss {
        Loss::CrossEntropy => Targets::Labels(&labels),
        Loss::MeanSquaredError => Targets::Values(y.view()),
    };
    finite_difference_gap(&net, &x, targets, loss, Mode::Training { seed }, 1e-4)
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), q: (f64, f64)) -> bool {
    orient(a, b, q) == 0.0
        && q.0 >= a.0.min(b.0)
        && q.0 <= a.0.max(b.0)
        && q.1 >= a.1.min(b.1)
        && q.1 <= a.1.max(b.1)
}

/// Exact 2D containment for integer coordinates: `q` lies in the hull iff it
/// lies in a triangle, on a segment, or at a point spanned by generators.
pub fn inside_hull_2d(points: &[(f64, f64)], q: (f64, f64)) -> bool {
    let n = points.len();
    for i in 0..n {
        if points[i] == q {
            return true;
        }
        for j in i + 1..n {
            if on_segment(points[i], points[j], q) {
                return true;
            }
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let d = orient(a, b, c);
                if d == 0.0 {
                    continue;
                }
                let s = [orient(a, b, q), orient(b, c, q), orient(c, a, q)];
                if s.iter().all(|&v| v * d >= 0.0) {
                    return true;
                }
            }
        }
    }
    false
}

/// Random 2D instance on a small integer grid, so that many queries land
/// exactly on hull edges.
pub fn random_hull_case_2d(seed: u64) -> (Vec<(f64, f64)>, (f64, f64)) {
    let mut r = rng(seed);
    let n = r.random_range(1..=30);
    let pts: Vec<(f64, f64)> =
        (0..n).map(|_| (r.random_range(-4..=4) as f64, r.random_range(-4..=4) as f64)).collect();
    let q = (r.random_range(-5..=5) as f64, r.random_range(-5..=5) as f64);
    (pts, q)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn gauss_solve(a: &Array2<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = b.to_vec();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))?;
        if m[[p, c]].abs() < 1e-12 {
            return None;
        }
        for k in 0..n {
            m.swap([c, k], [p, k]);
        }
        v.swap(c, p);
        for r in c + 1..n {
            let f = m[[r, c]] / m[[c, c]];
            for k in c..n {
                m[[r, k]] -= f * m[[c, k]];
            }
            v[r] -= f * v[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[[r, k]] * x[k]).sum();
        x[r] = (v[r] - s) / m[[r, r]];
    }
    Some(x)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if n < k {
        return Vec::new();
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Feasibility of `{A x = b, x >= 0}` by enumerating basic solutions: the
/// system is feasible iff some set of linearly independent columns solves it
/// with nonnegative weights.
pub fn enumeration_feasible(a: &Array2<f64>, b: &[f64]) -> bool {
    let (m, n) = a.dim();
    if b.iter().all(|&v| v == 0.0) {
        return true;
    }
    for k in 1..=m.min(n) {
        for cols in subsets(n, k) {
            // Normal equations over the chosen columns.
            let g = Array2::from_shape_fn((k, k), |(i, j)| (0..m).map(|r| a[[r, cols[i]]] * a[[r, cols[j]]]).sum());
            let rhs: Vec<f64> = (0..k).map(|i| (0..m).map(|r| a[[r, cols[i]]] * b[r]).sum()).collect();
            let Some(x) = gauss_solve(&g, &rhs) else { continue };
            let residual = (0..m)
                .map(|r| (cols.iter().zip(&x).map(|(&c, &xv)| a[[r, c]] * xv).sum::<f64>() - b[r]).abs())
                .fold(0.0, f64::max);
            if residual < 1e-9 && x.iter().all(|&v| v >= -1e-9) {
                return true;
            }
        }
    }
    false
}

/// Random small integer system with `m <= 3`, `n <= 6`; half are built
/// feasible from a nonnegative point.
pub fn random_lp_case(seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let m = r.random_range(1..=3);
    let n = r.random_range(1..=6);
    let a = Array2::from_shape_simple_fn((m, n), || r.random_range(-3..=3) as f64);
    let b = if r.random_bool(0.5) {
        let x: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { r.random_range(0..=3) as f64 } else { 0.0 }).collect();
        (0..m).map(|i| (0..n).map(|j| a[[i, j]] * x[j]).sum()).collect()
    } else {
        (0..m).map(|_| r.random_range(-4..=4) as f64).collect()
    };
    (a, b)
}

/// Determinant by cofactor expansion along the first row.
pub fn det_cofactor(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    if n == 1 {
        return a[[0, 0]];
    }
    (0..n)
        .map(|j| {
            let minor = Array2::from_shape_fn((n - 1, n - 1), |(r, c)| a[[r + 1, if c < j { c } else { c + 1 }]]);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * a[[0, j]] * det_cofactor(&minor)
        })
        .sum()
}

/// Maximizes the logistic log-likelihood by full-batch gradient ascent with
/// backtracking, stopping when the gradient vanishes.
pub fn gradient_ascent_logistic(x: &Array2<f64>, y: &[f64]) -> Array1<f64> {
    let ll = |b: &Array1<f64>| -> f64 {
        x.rows()
            .into_iter()
            .zip(y)
            .map(|(row, &yi)| {
                let e = row.dot(b);
                yi * e - if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() }
            })
            .sum()
    };
    let grad = |b: &Array1<f64>| -> Array1<f64> {
        let mut g = Array1::zeros(b.len());
        for (row, &yi) in x.rows().into_iter().zip(y) {
            let p = 1.0 / (1.0 + (-row.dot(b)).exp());
            g.scaled_add(yi - p, &row);
        }
        g
    };
    let mut beta = Array1::<f64>::zeros(x.ncols());
    let mut step = 1.0;
    for _ in 0..200_000 {
        let g = grad(&beta);
        let gn = g.dot(&g);
        if gn.sqrt() < 1e-11 {
            break;
        }
        let f0 = ll(&beta);
        step *= 2.0;
        loop {
            let cand = &beta + &(&g * step);
            if ll(&cand) >= f0 + 0.5 * step * gn || step < 1e-14 {
                beta = cand;
                break;
            }
            step *= 0.5;
        }
    }
    beta
}

/// Random logistic data set of size `m`: distances, hull flags and labels
/// drawn from a known logistic model.
pub fn random_logistic_case(seed: u64, m: usize) -> (Vec<f64>, Vec<bool>, Vec<bool>) {
    let mut r = rng(seed);
    let b: [f64; 4] = [r.random_range(-1.0..1.0), r.random_range(-1.5..0.0), r.random_range(-1.0..1.0), r.random_range(-0.5..0.5)];
    let mut d = Vec::new();
    let mut h = Vec::new();
    let mut c = Vec::new();
    for _ in 0..m {
        let dist: f64 = r.random_range(0.0..3.0);
        let inside = r.random_bool(0.5);
        let z = dist - 1.5;
        let hv = if inside { 1.0 } else { 0.0 };
        let eta = b[0] + b[1] * z + b[2] * hv + b[3] * z * hv;
        d.push(dist);
        h.push(inside);
        c.push(r.random_bool(1.0 / (1.0 + (-eta).exp())));
    }
    (d, h, c)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[[i, j]].powi(2)).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Mean squared residual per entry of the best rank-`k` affine
/// approximation: the trailing covariance eigenvalues divided by the width.
pub fn pca_residual(data: &Array2<f64>, k: usize) -> f64 {
    let (n, d) = data.dim();
    let mean = data.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = data - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let ev = symmetric_eigenvalues(&cov);
    ev[k..].iter().map(|v| v.max(0.0)).sum::<f64>() / d as f64
}
