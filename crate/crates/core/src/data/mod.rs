//! Datasets: the controlled Gaussian task, MNIST IDX files, activation dumps
//! and tuning-curve embeddings.

mod idx;
mod nact;
mod toy;
mod tuning;

use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use idx::{decode_idx, load_idx, load_mnist, parse_idx_images, parse_idx_labels, LabeledImages, IMAGES_MAGIC, LABELS_MAGIC};
pub use nact::{
    decode_nact, dump_activations, encode_nact, load_activations, points_only, ActivationSet, Split, NACT_MAGIC,
    NACT_VERSION,
};
pub use toy::{
    calibrate_sigma, gen_gaussian_task, nearest_centroid_accuracy, random_orthogonal, SigmaCalibration, ToySpec, ToyTask,
    CALIBRATION_DRAWS, CALIBRATION_MAX_ITER, CALIBRATION_TOLERANCE, SIGMA_RANGE,
};
pub use tuning::{fig1_one_dimensional, fig1_two_dimensional, tuning_curve_embed, TuningDemo, FIG1_CIRCLE_POINTS};

use crate::error::{Error, Result};

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Toy { spec: ToySpec, sigma: f64 },
    Mnist { dir: String, n_train: usize, n_test: usize },
    Csv { dir: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train_features: Array2<f64>,
    pub train_labels: Vec<usize>,
    pub test_features: Array2<f64>,
    pub test_labels: Vec<usize>,
    pub n_classes: usize,
    pub provenance: Provenance,
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    match labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
        Some((row, &label)) => Err(Error::InvalidLabel { row, label, n_classes }),
        None => Ok(()),
    }
}

impl Dataset {
    pub fn new(
        train_features: Array2<f64>,
        train_labels: Vec<usize>,
        test_features: Array2<f64>,
        test_labels: Vec<usize>,
        n_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if train_features.nrows() != train_labels.len() {
            return Err(Error::dim("train labels", train_features.nrows(), train_labels.len()));
        }
        if test_features.nrows() != test_labels.len() {
            return Err(Error::dim("test labels", test_features.nrows(), test_labels.len()));
        }
        if train_features.ncols() != test_features.ncols() {
            return Err(Error::dim("test feature columns", train_features.ncols(), test_features.ncols()));
        }
        check_labels(&train_labels, n_classes)?;
        check_labels(&test_labels, n_classes)?;
        Ok(Self {
            train_features,
            train_labels,
            test_features,
            test_labels,
            n_classes,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.train_features.ncols()
    }

    /// Writes `train.csv` and `test.csv` (label first, then features).
    /// Values use shortest round-trip formatting, so reading back is exact.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_split(&dir.join("train.csv"), &self.train_features, &self.train_labels)?;
        write_split(&dir.join("test.csv"), &self.test_features, &self.test_labels)
    }

    pub fn read_csv(dir: impl AsRef<Path>, n_classes: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let (train_x, train_y) = read_split(&dir.join("train.csv"))?;
        let (test_x, test_y) = read_split(&dir.join("test.csv"))?;
        Dataset::new(
            train_x,
            train_y,
            test_x,
            test_y,
            n_classes,
            Provenance::Csv {
                dir: dir.display().to_string(),
            },
        )
    }
}

fn write_split(path: &Path, x: &Array2<f64>, y: &[usize]) -> Result<()> {
    let file = File::create(path).map_err(Error::at_path(path))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["label".to_string()];
    header.extend((0..x.ncols()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (row, label) in x.rows().into_iter().zip(y) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_split(path: &Path) -> Result<(Array2<f64>, Vec<usize>)> {
    let file = File::open(path).map_err(Error::at_path(path))?;
    let mut r = csv::Reader::from_reader(file);
    let d = r.headers()?.len().saturating_sub(1);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::dim("csv row width", d + 1, rec.len()));
        }
        let parse_err = |what: &str| Error::InvalidInput(format!("{}: row {i}: bad {what}", path.display()));
        labels.push(rec[0].parse::<usize>().map_err(|_| parse_err("label"))?);
        for v in rec.iter().skip(1) {
            values.push(v.parse::<f64>().map_err(|_| parse_err("value"))?);
        }
    }
    let x = Array2::from_shape_vec((labels.len(), d), values).expect("row widths checked");
    Ok((x, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let task = gen_gaussian_task(&ToySpec {
            n_id: 2,
            n_input: 4,
            train_per_class: 3,
            test_per_class: 2,
            sigma: Some(0.3),
            ..Default::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        task.dataset.write_csv(dir.path()).unwrap();
        let back = Dataset::read_csv(dir.path(), 10).unwrap();
        assert_eq!(back.train_features, task.dataset.train_features);
        assert_eq!(back.test_labels, task.dataset.test_labels);
    }

    #[test]
    fn label_range_enforced() {
        let err = Dataset::new(
            Array2::zeros((2, 1)),
            vec![0, 3],
            Array2::zeros((0, 1)),
            vec![],
            3,
            Provenance::Csv { dir: String::new() },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidLabel { row: 1, label: 3, .. }));
    }
}
