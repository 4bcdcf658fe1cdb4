use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub mean_distance: f64,
    pub accuracy: f64,
    pub count: usize,
    /// Sample indices in this bin, by increasing distance.
    pub members: Vec<usize>,
}

/// Equal-count bins by distance rank. Ties are broken by sample index and
/// the first `M mod n_bins` bins take one extra sample.
pub fn binned_accuracy(distances: &[f64], correct: &[bool], n_bins: usize) -> Result<Vec<Bin>> {
    let m = distances.len();
    if correct.len() != m {
        return Err(Error::dim("correctness flags", m, correct.len()));
    }
    if n_bins == 0 || m < n_bins {
        return Err(Error::InvalidInput(format!("{m} samples cannot fill {n_bins} bins")));
    }
    if distances.iter().any(|d| d.is_nan()) {
        return Err(Error::NonFinite("distances"));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    let base = m / n_bins;
    let extra = m % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 0..n_bins {
        let size = base + usize::from(b < extra);
        let members = order[start..start + size].to_vec();
        start += size;
        let hits = members.iter().filter(|&&i| correct[i]).count();
        let mean_distance = members.iter().map(|&i| distances[i]).sum::<f64>() / size as f64;
        bins.push(Bin {
            mean_distance,
            accuracy: hits as f64 / size as f64,
            count: size,
            members,
        });
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let d: Vec<f64> = (0..37).map(|i| (i * 7 % 37) as f64).collect();
        let bins = binned_accuracy(&d, &[true; 37], 10).unwrap();
        assert!(bins.iter().all(|b| b.accuracy == 1.0));
        let counts: Vec<usize> = bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![4, 4, 4, 4, 4, 4, 4, 3, 3, 3]);
    }

    #[test]
    fn hundred_samples_fill_ten_bins() {
        let d: Vec<f64> = (0..100).map(|i| ((i * 31) % 100) as f64).collect();
        let bins = binned_accuracy(&d, &[false; 100], 10).unwrap();
        assert!(bins.iter().all(|b| b.count == 10));
        assert!(bins.windows(2).all(|w| w[0].mean_distance < w[1].mean_distance));
    }

    #[test]
    fn ties_follow_index() {
        let bins = binned_accuracy(&[1.0, 1.0, 1.0, 1.0], &[true, false, true, false], 2).unwrap();
        assert_eq!(bins[0].members, vec![0, 1]);
        assert_eq!(bins[1].members, vec![2, 3]);
    }

    #[test]
    fn too_few_samples() {
        assert!(binned_accuracy(&[1.0; 5], &[true; 5], 10).is_err());
        assert!(binned_accuracy(&[1.0; 5], &[true; 4], 2).is_err());
    }
}
