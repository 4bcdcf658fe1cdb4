use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Euclidean distance to the nearest reference.
    Euclidean,
    /// `1 - cos` to the most aligned reference; zero vectors are at distance 1.
    Cosine,
    /// Euclidean distance to the nearest reference sharing the query's label.
    ClassConditional,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Euclidean, Metric::Cosine, Metric::ClassConditional];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::ClassConditional => "class_conditional",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric {s:?}")))
    }
}

pub fn cosine_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - a.dot(&b) / (na * nb)).clamp(0.0, 2.0)
}

/// Squared Euclidean distance, abandoning once the partial sum exceeds
/// `bound`. Summation order matches a plain scan, so a completed sum is
/// bit-identical to it.
#[inline]
fn squared_euclidean_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut s = 0.0;
    for (chunk_a, chunk_b) in a.chunks(16).zip(b.chunks(16)) {
        for (x, y) in chunk_a.iter().zip(chunk_b) {
            let d = x - y;
            s += d * d;
        }
        if s > bound {
            return s;
        }
    }
    s
}

/// Per-query distance to the nearest reference under `metric`.
///
/// Class-conditional distances need both label sets, and every query label
/// must occur among the reference labels.
pub fn nn_distance(
    queries: ArrayView2<f64>,
    references: ArrayView2<f64>,
    metric: Metric,
    reference_labels: Option<&[usize]>,
    query_labels: Option<&[usize]>,
) -> Result<Vec<f64>> {
    if references.nrows() == 0 {
        return Err(Error::InvalidInput("nearest-neighbor search needs at least one reference".into()));
    }
    if queries.ncols() != references.ncols() {
        return Err(Error::dim("query dimension", references.ncols(), queries.ncols()));
    }
    let refs: Vec<Vec<f64>> = references.rows().into_iter().map(|r| r.to_vec()).collect();
    let qs: Vec<Vec<f64>> = queries.rows().into_iter().map(|r| r.to_vec()).collect();

    match metric {
        Metric::Euclidean => Ok(qs
            .par_iter()
            .map(|q| {
                refs.iter()
                    .fold(f64::INFINITY, |best, r| best.min(squared_euclidean_bounded(q, r, best)))
                    .sqrt()
            })
            .collect()),
        Metric::Cosine => {
            let norms: Vec<f64> = refs.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            Ok(qs
                .par_iter()
                .map(|q| {
                    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                    refs.iter().zip(&norms).fold(f64::INFINITY, |best, (r, &rn)| {
                        let d = if qn == 0.0 || rn == 0.0 {
                            1.0
                        } else {
                            let dot: f64 = q.iter().zip(r).map(|(a, b)| a * b).sum();
                            (1.0 - dot / (qn * rn)).clamp(0.0, 2.0)
                        };
                        best.min(d)
                    })
                })
                .collect())
        }
        Metric::ClassConditional => {
            let (Some(rl), Some(ql)) = (reference_labels, query_labels) else {
                return Err(Error::InvalidInput(
                    "class-conditional distance needs reference and query labels".into(),
                ));
            };
            if rl.len() != refs.len() {
                return Err(Error::dim("reference labels", refs.len(), rl.len()));
            }
            if ql.len() != qs.len() {
                return Err(Error::dim("query labels", qs.len(), ql.len()));
            }
            let n_labels = rl.iter().chain(ql).copied().max().map_or(0, |m| m + 1);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
            for (i, &l) in rl.iter().enumerate() {
                by_class[l].push(i);
            }
            if let Some((row, &label)) = ql.iter().enumerate().find(|(_, &l)| by_class[l].is_empty()) {
                return Err(Error::InvalidInput(format!(
                    "query row {row} has label {label}, which no reference carries"
                )));
            }
            Ok(qs
                .par_iter()
                .zip(ql.par_iter())
                .map(|(q, &l)| {
                    by_class[l]
                        .iter()
                        .fold(f64::INFINITY, |best, &i| best.min(squared_euclidean_bounded(q, &refs[i], best)))
                        .sqrt()
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn duplicate_query_is_at_zero() {
        let r = array![[1.0, 2.0], [3.0, -1.0]];
        let d = nn_distance(array![[3.0, -1.0], [0.0, 0.0]].view(), r.view(), Metric::Euclidean, None, None).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 5.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cosine_conventions() {
        assert!(cosine_distance(array![1.0, 2.0].view(), array![2.0, 4.0].view()) < 1e-15);
        assert!((cosine_distance(array![1.0, 0.0].view(), array![0.0, 3.0].view()) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_distance(array![0.0, 0.0].view(), array![0.0, 3.0].view()), 1.0);
        assert!((cosine_distance(array![1.0, 0.0].view(), array![-1.0, 0.0].view()) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn class_conditional_ignores_other_classes() {
        let r = array![[0.0], [10.0]];
        let q = array![[1.0]];
        let d = nn_distance(q.view(), r.view(), Metric::ClassConditional, Some(&[0, 1]), Some(&[1])).unwrap();
        assert_eq!(d, vec![9.0]);
        assert!(nn_distance(q.view(), r.view(), Metric::ClassConditional, None, Some(&[1])).is_err());
        assert!(nn_distance(q.view(), r.view(), Metric::ClassConditional, Some(&[0, 0]), Some(&[1])).is_err());
    }

    #[test]
    fn empty_references_rejected() {
        let r = ndarray::Array2::<f64>::zeros((0, 2));
        assert!(nn_distance(array![[1.0, 1.0]].view(), r.view(), Metric::Euclidean, None, None).is_err());
    }
}
