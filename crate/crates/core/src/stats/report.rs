use serde::{Deserialize, Serialize};

use super::distance::Metric;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Neural,
    Latent,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Neural => "neural",
            Space::Latent => "latent",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub sample: usize,
    pub euclidean: f64,
    pub cosine: f64,
    pub class_conditional: f64,
    /// `None` when hull membership was not computed for this space.
    pub in_hull: Option<bool>,
    pub correct: bool,
}

impl DistanceRecord {
    pub fn distance(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Euclidean => self.euclidean,
            Metric::Cosine => self.cosine,
            Metric::ClassConditional => self.class_conditional,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub space: Space,
    pub trial: usize,
    pub records: Vec<DistanceRecord>,
}

impl DistanceReport {
    /// Assemble a report from per-sample columns. Every column must have the
    /// same length as `correct`.
    pub fn from_columns(
        space: Space,
        trial: usize,
        euclidean: &[f64],
        cosine: &[f64],
        class_conditional: &[f64],
        in_hull: Option<&[bool]>,
        correct: &[bool],
    ) -> Result<Self> {
        let m = correct.len();
        for (name, len) in [
            ("euclidean distances", euclidean.len()),
            ("cosine distances", cosine.len()),
            ("class-conditional distances", class_conditional.len()),
            ("in_hull flags", in_hull.map_or(m, <[bool]>::len)),
        ] {
            if len != m {
                return Err(Error::dim(name, m, len));
            }
        }
        let records = (0..m)
            .map(|i| DistanceRecord {
                sample: i,
                euclidean: euclidean[i],
                cosine: cosine[i],
                class_conditional: class_conditional[i],
                in_hull: in_hull.map(|h| h[i]),
                correct: correct[i],
            })
            .collect();
        let report = DistanceReport { space, trial, records };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            let ok = [r.euclidean, r.cosine, r.class_conditional]
                .iter()
                .all(|d| d.is_finite() && *d >= 0.0)
                && r.cosine <= 2.0;
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "sample {} has an out-of-range distance",
                    r.sample
                )));
            }
        }
        Ok(())
    }

    pub fn distances(&self, metric: Metric) -> Vec<f64> {
        self.records.iter().map(|r| r.distance(metric)).collect()
    }

    pub fn correct(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.correct).collect()
    }

    pub fn in_hull(&self) -> Option<Vec<bool>> {
        self.records.iter().map(|r| r.in_hull).collect()
    }

    /// Distances split into (correct, incorrect) samples.
    pub fn split_by_correctness(&self, metric: Metric) -> (Vec<f64>, Vec<f64>) {
        let mut hit = Vec::new();
        let mut miss = Vec::new();
        for r in &self.records {
            if r.correct {
                hit.push(r.distance(metric));
            } else {
                miss.push(r.distance(metric));
            }
        }
        (hit, miss)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub correct: bool,
    pub in_hull: Option<bool>,
    pub mean_distance: f64,
    pub count: usize,
}

/// Mean distance per `(correct, in_hull)` group over all records of all
/// reports. Groups without samples are omitted. Output is ordered by
/// `correct` then `in_hull`, with `None` first.
pub fn correctness_by_hull_table(reports: &[DistanceReport], metric: Metric) -> Result<Vec<GroupMean>> {
    let mut groups: Vec<GroupMean> = Vec::new();
    let mut any = false;
    for r in reports.iter().flat_map(|rep| &rep.records) {
        any = true;
        let d = r.distance(metric);
        match groups.iter_mut().find(|g| g.correct == r.correct && g.in_hull == r.in_hull) {
            Some(g) => {
                g.mean_distance += d;
                g.count += 1;
            }
            None => groups.push(GroupMean {
                correct: r.correct,
                in_hull: r.in_hull,
                mean_distance: d,
                count: 1,
            }),
        }
    }
    if !any {
        return Err(Error::EmptySample);
    }
    for g in &mut groups {
        g.mean_distance /= g.count as f64;
    }
    groups.sort_by_key(|g| (g.correct, g.in_hull));
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(dist: &[f64], hull: &[bool], correct: &[bool]) -> DistanceReport {
        DistanceReport::from_columns(Space::Latent, 0, dist, dist, dist, Some(hull), correct).unwrap()
    }

    #[test]
    fn single_group() {
        let r = report(&[0.5, 1.5], &[true, true], &[true, true]);
        let t = correctness_by_hull_table(&[r], Metric::Euclidean).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].correct, t[0].in_hull, t[0].count), (true, Some(true), 2));
        assert_eq!(t[0].mean_distance, 1.0);
    }

    #[test]
    fn correct_near_incorrect_far() {
        let r = report(&[1.0, 2.0, 1.0, 2.0], &[false; 4], &[true, false, true, false]);
        let t = correctness_by_hull_table(&[r], Metric::Euclidean).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].correct, t[0].mean_distance), (false, 2.0));
        assert_eq!((t[1].correct, t[1].mean_distance), (true, 1.0));
    }

    #[test]
    fn empty_and_invalid() {
        assert!(correctness_by_hull_table(&[], Metric::Cosine).is_err());
        assert!(DistanceReport::from_columns(Space::Neural, 0, &[1.0], &[2.5], &[1.0], None, &[true]).is_err());
        assert!(DistanceReport::from_columns(Space::Neural, 0, &[1.0], &[0.5], &[1.0], None, &[true, false]).is_err());
    }
}
