//! Big-endian IDX files (the MNIST distribution format). Gzipped files are
//! detected by their header and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::Array2;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Flattened images scaled to `[0, 1]` with their labels.
#[derive(Clone, Debug)]
pub struct LabeledImages {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(Error::at_path(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(Error::at_path(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn header(bytes: &[u8], what: &'static str, len: usize, magic: u32) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            what,
            expected: len as u64,
            actual: bytes.len() as u64,
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::IdxMagic {
            what,
            expected: magic,
            found,
        });
    }
    if bytes.len() < len {
        return Err(Error::Truncated {
            what,
            expected: len as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Parses an IDX image file: returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    const WHAT: &str = "IDX image file";
    header(bytes, WHAT, 16, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4) as u64;
    let rows = be_u32(bytes, 8) as u64;
    let cols = be_u32(bytes, 12) as u64;
    let payload = n.checked_mul(rows).and_then(|v| v.checked_mul(cols));
    let available = (bytes.len() - 16) as u64;
    match payload {
        Some(p) if p <= available => {
            let end = 16 + p as usize;
            Ok((n as usize, rows as usize, cols as usize, &bytes[16..end]))
        }
        _ => Err(Error::Truncated {
            what: WHAT,
            expected: payload.map(|p| p.saturating_add(16)).unwrap_or(u64::MAX),
            actual: bytes.len() as u64,
        }),
    }
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    const WHAT: &str = "IDX label file";
    header(bytes, WHAT, 8, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4) as usize;
    let available = bytes.len() - 8;
    if n > available {
        return Err(Error::Truncated {
            what: WHAT,
            expected: 8 + n as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(&bytes[8..8 + n])
}

/// Decodes a pair of already-read IDX buffers.
pub fn decode_idx(images: &[u8], labels: &[u8]) -> Result<LabeledImages> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let d = rows * cols;
    let features = Array2::from_shape_fn((n, d), |(i, j)| pixels[i * d + j] as f64 / 255.0);
    Ok(LabeledImages {
        features,
        labels: labels.iter().map(|&l| l as usize).collect(),
        rows,
        cols,
    })
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledImages> {
    let images = read_maybe_gz(images_path.as_ref())?;
    let labels = read_maybe_gz(labels_path.as_ref())?;
    decode_idx(&images, &labels)
}

/// Finds `stem` or `stem.gz` in `dir`.
fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Path {
        path: plain,
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found (also tried .gz)"),
    })
}

/// Loads the standard four MNIST files from `dir`, keeping the first
/// `n_train` training and `n_test` test images (all when `None`).
pub fn load_mnist(dir: impl AsRef<Path>, n_train: Option<usize>, n_test: Option<usize>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let train = load_idx(locate(dir, "train-images-idx3-ubyte")?, locate(dir, "train-labels-idx1-ubyte")?)?;
    let test = load_idx(locate(dir, "t10k-images-idx3-ubyte")?, locate(dir, "t10k-labels-idx1-ubyte")?)?;
    let take = |set: LabeledImages, n: Option<usize>| {
        let n = n.unwrap_or(set.labels.len()).min(set.labels.len());
        (
            set.features.slice(ndarray::s![..n, ..]).to_owned(),
            set.labels[..n].to_vec(),
        )
    };
    let (train_x, train_y) = take(train, n_train);
    let (test_x, test_y) = take(test, n_test);
    let n_tr = train_y.len();
    let n_te = test_y.len();
    Dataset::new(
        train_x,
        train_y,
        test_x,
        test_y,
        10,
        Provenance::Mnist {
            dir: dir.display().to_string(),
            n_train: n_tr,
            n_test: n_te,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(magic: u32, n: u32, rows: u32, cols: u32, px: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [magic, n, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(px);
        v
    }

    fn labels(n: u32, ls: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&n.to_be_bytes());
        v.extend_from_slice(ls);
        v
    }

    #[test]
    fn hand_built_two_by_two() {
        let img = images(IMAGES_MAGIC, 1, 2, 2, &[0, 128, 255, 64]);
        let set = decode_idx(&img, &labels(1, &[7])).unwrap();
        assert_eq!(set.features.row(0).to_vec(), vec![0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
        assert_eq!(set.labels, vec![7]);
    }

    #[test]
    fn wrong_magic() {
        let img = images(LABELS_MAGIC, 1, 2, 2, &[0, 0, 0, 0]);
        let err = decode_idx(&img, &labels(1, &[0])).unwrap_err();
        assert!(matches!(err, Error::IdxMagic { found: LABELS_MAGIC, .. }), "{err}");
    }

    #[test]
    fn truncated_and_mismatched() {
        let img = images(IMAGES_MAGIC, 2, 2, 2, &[0, 0, 0, 0, 0]);
        assert!(matches!(decode_idx(&img, &labels(2, &[0, 1])), Err(Error::Truncated { .. })));
        let img = images(IMAGES_MAGIC, 1, 2, 2, &[0, 0, 0, 0]);
        assert!(matches!(decode_idx(&img, &labels(2, &[0, 1])), Err(Error::CountMismatch { .. })));
        assert!(matches!(decode_idx(&img[..10], &labels(1, &[0])), Err(Error::Truncated { .. })));
        assert!(matches!(decode_idx(&img, &labels(3, &[0])), Err(Error::Truncated { .. })));
    }

    #[test]
    fn huge_header_does_not_overflow() {
        let img = images(IMAGES_MAGIC, u32::MAX, u32::MAX, u32::MAX, &[]);
        assert!(matches!(parse_idx_images(&img), Err(Error::Truncated { .. })));
    }
}
