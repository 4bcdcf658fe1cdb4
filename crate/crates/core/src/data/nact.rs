//! "NACT" activation dumps.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NACT" | u32 version = 1 | u32 n_samples | u32 dim | u32 n_classes | u8 split
//! f32 activations, row-major, n_samples * dim
//! u8 labels, n_samples
//! u8 base_predictions, n_samples
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NACT_MAGIC: [u8; 4] = *b"NACT";
pub const NACT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn flag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    fn from_flag(f: u8) -> Result<Self> {
        match f {
            0 => Ok(Split::Train),
            1 => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split flag {other}"))),
        }
    }
}

/// Tapped activations of one split, with labels and the base network's
/// predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSet {
    pub activations: Array2<f64>,
    pub labels: Vec<usize>,
    pub base_predictions: Vec<usize>,
    pub base_accuracy: f64,
    pub n_classes: usize,
    pub split: Split,
    pub source: String,
}

impl ActivationSet {
    pub fn new(
        activations: Array2<f64>,
        labels: Vec<usize>,
        base_predictions: Vec<usize>,
        n_classes: usize,
        split: Split,
        source: impl Into<String>,
    ) -> Result<Self> {
        let n = activations.nrows();
        if labels.len() != n {
            return Err(Error::dim("activation labels", n, labels.len()));
        }
        if base_predictions.len() != n {
            return Err(Error::dim("activation predictions", n, base_predictions.len()));
        }
        for (row, &label) in labels.iter().chain(&base_predictions).enumerate() {
            if label >= n_classes {
                return Err(Error::InvalidLabel {
                    row: row % n.max(1),
                    label,
                    n_classes,
                });
            }
        }
        let base_accuracy = if n == 0 {
            0.0
        } else {
            labels.iter().zip(&base_predictions).filter(|(a, b)| a == b).count() as f64 / n as f64
        };
        Ok(Self {
            activations,
            labels,
            base_predictions,
            base_accuracy,
            n_classes,
            split,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.activations.ncols()
    }

    pub fn base_correct(&self) -> Vec<bool> {
        self.labels.iter().zip(&self.base_predictions).map(|(a, b)| a == b).collect()
    }

    /// Same set with activations replaced, e.g. by latent codes.
    pub fn with_activations(&self, activations: Array2<f64>, source: impl Into<String>) -> Result<Self> {
        if activations.nrows() != self.len() {
            return Err(Error::dim("replacement activation rows", self.len(), activations.nrows()));
        }
        let mut out = self.clone();
        out.activations = activations;
        out.source = source.into();
        Ok(out)
    }

    /// Activations as stored on disk: rounded to `f32`.
    pub fn quantized(&self) -> Array2<f64> {
        self.activations.mapv(|v| v as f32 as f64)
    }
}

pub fn encode_nact(set: &ActivationSet) -> Result<Vec<u8>> {
    let n = set.len();
    let d = set.dim();
    let to_u32 = |v: usize, what: &'static str| {
        u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} does not fit in u32")))
    };
    if set.n_classes > 256 {
        return Err(Error::InvalidInput(format!(
            "activation dumps store labels as u8; {} classes is too many",
            set.n_classes
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + n * d * 4 + 2 * n);
    out.extend_from_slice(&NACT_MAGIC);
    out.extend_from_slice(&NACT_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "sample count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "dimension")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.n_classes, "class count")?.to_le_bytes());
    out.push(set.split.flag());
    for v in set.activations.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.extend(set.labels.iter().map(|&l| l as u8));
    out.extend(set.base_predictions.iter().map(|&l| l as u8));
    Ok(out)
}

pub fn decode_nact(bytes: &[u8], source: impl Into<String>) -> Result<ActivationSet> {
    if bytes.len() < 4 || bytes[..4] != NACT_MAGIC {
        let mut found = [0u8; 4];
        for (f, b) in found.iter_mut().zip(bytes) {
            *f = *b;
        }
        return Err(Error::NactMagic { found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::NactLength {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let u32_at = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let version = u32_at(4);
    if version != NACT_VERSION {
        return Err(Error::NactVersion {
            found: version,
            expected: NACT_VERSION,
        });
    }
    let n = u32_at(8) as u64;
    let d = u32_at(12) as u64;
    let n_classes = u32_at(16) as usize;
    let split = Split::from_flag(bytes[20])?;
    let expected = HEADER_LEN as u64 + n * d * 4 + 2 * n;
    if bytes.len() as u64 != expected {
        return Err(Error::NactLength {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let (n, d) = (n as usize, d as usize);
    let body = &bytes[HEADER_LEN..];
    let acts: Vec<f64> = body[..n * d * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let activations = Array2::from_shape_vec((n, d), acts).expect("length checked against header");
    let labels = body[n * d * 4..n * d * 4 + n].iter().map(|&b| b as usize).collect();
    let preds = body[n * d * 4 + n..].iter().map(|&b| b as usize).collect();
    ActivationSet::new(activations, labels, preds, n_classes, split, source)
}

pub fn dump_activations(set: &ActivationSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nact(set)?;
    fs::write(path, bytes).map_err(Error::at_path(path))
}

pub fn load_activations(path: impl AsRef<Path>) -> Result<ActivationSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    decode_nact(&bytes, path.display().to_string())
}

/// Convenience for callers holding only a matrix (e.g. generic point sources).
pub fn points_only(points: ArrayView2<f64>, split: Split) -> ActivationSet {
    let n = points.nrows();
    ActivationSet::new(points.to_owned(), vec![0; n], vec![0; n], 1, split, "points").expect("consistent by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, d: usize) -> ActivationSet {
        let acts = Array2::from_shape_fn((n, d), |(i, j)| (i as f64 * 0.37 - j as f64 * 1.1).sin());
        let labels = (0..n).map(|i| i % 3).collect();
        let preds = (0..n).map(|i| (i / 2) % 3).collect();
        ActivationSet::new(acts, labels, preds, 3, Split::Test, "mem").unwrap()
    }

    #[test]
    fn round_trip_at_f32() {
        let s = sample(17, 5);
        let back = decode_nact(&encode_nact(&s).unwrap(), "mem").unwrap();
        assert_eq!(back.activations, s.quantized());
        assert_eq!(back.labels, s.labels);
        assert_eq!(back.base_predictions, s.base_predictions);
        assert_eq!(back.base_accuracy, s.base_accuracy);
        assert_eq!(back.split, s.split);
        assert_eq!(back.n_classes, 3);
    }

    #[test]
    fn empty_set_round_trips() {
        let s = sample(0, 4);
        let bytes = encode_nact(&s).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = decode_nact(&bytes, "mem").unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 4);
    }

    #[test]
    fn truncation_and_header_errors() {
        let bytes = encode_nact(&sample(6, 3)).unwrap();
        assert!(matches!(decode_nact(&bytes[..40], ""), Err(Error::NactLength { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_nact(&bad, ""), Err(Error::NactMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_nact(&bad, ""), Err(Error::NactVersion { found: 2, .. })));
        assert!(matches!(decode_nact(b"NA", ""), Err(Error::NactMagic { .. })));
    }

    #[test]
    fn base_accuracy_is_consistent() {
        let s = sample(12, 2);
        let c = s.base_correct();
        let acc = c.iter().filter(|&&b| b).count() as f64 / 12.0;
        assert!((s.base_accuracy - acc).abs() < 1e-12);
        assert!(ActivationSet::new(Array2::zeros((1, 1)), vec![5], vec![0], 3, Split::Train, "").is_err());
    }
}
