//! Bell-shaped tuning-curve embeddings and the two low-dimensional
//! demonstrations where an intrinsic-space hull does not survive embedding.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};

/// Response of neuron `j` to sample `s`: `exp(-|s - c_j|^2 / (2 width^2))`.
pub fn tuning_curve_embed(samples: ArrayView2<f64>, centers: ArrayView2<f64>, width: f64) -> Result<Array2<f64>> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidInput(format!("tuning width {width} must be positive")));
    }
    if samples.ncols() != centers.ncols() {
        return Err(Error::dim("tuning curve dimension", centers.ncols(), samples.ncols()));
    }
    let denom = 2.0 * width * width;
    Ok(Array2::from_shape_fn((samples.nrows(), centers.nrows()), |(i, j)| {
        let d2: f64 = samples
            .row(i)
            .iter()
            .zip(centers.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (-d2 / denom).exp()
    }))
}

/// Intrinsic points, tuning centers and their embedded responses.
#[derive(Clone, Debug, Serialize)]
pub struct TuningDemo {
    pub name: &'static str,
    pub centers: Array2<f64>,
    pub width: f64,
    pub train: Array2<f64>,
    pub test: Array2<f64>,
    pub embedded_train: Array2<f64>,
    pub embedded_test: Array2<f64>,
}

impl TuningDemo {
    fn build(name: &'static str, centers: Array2<f64>, width: f64, train: Array2<f64>, test: Array2<f64>) -> Self {
        let embedded_train = tuning_curve_embed(train.view(), centers.view(), width).expect("valid demo parameters");
        let embedded_test = tuning_curve_embed(test.view(), centers.view(), width).expect("valid demo parameters");
        Self {
            name,
            centers,
            width,
            train,
            test,
            embedded_train,
            embedded_test,
        }
    }
}

/// One intrinsic dimension, two neurons centered at -1 and +1 (width 0.75).
/// Training points sit at the centers; 99 test points fill the gap.
pub fn fig1_one_dimensional() -> TuningDemo {
    let centers = Array2::from_shape_vec((2, 1), vec![-1.0, 1.0]).unwrap();
    let train = centers.clone();
    let test = Array2::from_shape_fn((99, 1), |(i, _)| -1.0 + 2.0 * (i + 1) as f64 / 100.0);
    TuningDemo::build("1d", centers, 0.75, train, test)
}

pub const FIG1_CIRCLE_POINTS: usize = 36;

/// Two intrinsic dimensions, three neurons at 90, 210 and 330 degrees on a
/// circle of radius 0.6 (width 0.8). Training points lie on the unit circle,
/// test points on the circle of radius 0.5.
pub fn fig1_two_dimensional() -> TuningDemo {
    let centers = Array2::from_shape_fn((3, 2), |(i, j)| {
        let a = (90.0 + 120.0 * i as f64).to_radians();
        0.6 * if j == 0 { a.cos() } else { a.sin() }
    });
    let circle = |r: f64, offset: f64| {
        Array2::from_shape_fn((FIG1_CIRCLE_POINTS, 2), |(i, j)| {
            let a = 2.0 * PI * (i as f64 + offset) / FIG1_CIRCLE_POINTS as f64;
            r * if j == 0 { a.cos() } else { a.sin() }
        })
    };
    TuningDemo::build("2d", centers, 0.8, circle(1.0, 0.0), circle(0.5, 0.5))
}
