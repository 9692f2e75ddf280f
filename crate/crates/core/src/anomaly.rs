//! Inductive monitoring: nominal-behavior boxes plus a calibrated distance
//! threshold.
//!
//! Training vectors are normalized per dimension, then clustered in a single
//! pass: each vector extends the nearest box when it lies within
//! `formation_epsilon` of it and otherwise starts a new point box. A vector's
//! distance δ is the Euclidean distance to the nearest point of the nearest
//! box. Calibration records δ over held-out nominal vectors and places the
//! anomaly threshold at an empirical quantile of those distances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnomalyError {
    #[error("no training vectors")]
    Empty,
    #[error("vector {index} has dimension {got}, expected {expected}")]
    Dimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("calibration needs at least {min} held-out vectors, got {got}")]
    TooFewHeldOut { min: usize, got: usize },
    #[error("quantile must lie in (0, 1), got {0}")]
    BadQuantile(f64),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

/// Minimum held-out set size for a usable quantile.
pub const MIN_HELD_OUT: usize = 50;

/// Per-dimension `(value − offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Training mean and population standard deviation; zero spread maps
    /// to scale 1.
    pub fn fit(vectors: &[Vec<f64>]) -> Self {
        let dim = vectors[0].len();
        let n = vectors.len() as f64;
        let mut offset = vec![0.0; dim];
        for v in vectors {
            for (o, x) in offset.iter_mut().zip(v) {
                *o += x;
            }
        }
        offset.iter_mut().for_each(|o| *o /= n);
        let mut scale = vec![0.0; dim];
        for v in vectors {
            for ((s, x), o) in scale.iter_mut().zip(v).zip(&offset) {
                *s += (x - o) * (x - o);
            }
        }
        for s in &mut scale {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        Self { offset, scale }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((x, o), s)| (x - o) / s)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }
}

/// Axis-aligned box in normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cluster {
    pub fn point(v: &[f64]) -> Self {
        Self {
            lo: v.to_vec(),
            hi: v.to_vec(),
        }
    }

    /// Euclidean distance from `v` to the nearest point of the box.
    pub fn distance(&self, v: &[f64]) -> f64 {
        let mut sq = 0.0;
        for ((x, lo), hi) in v.iter().zip(&self.lo).zip(&self.hi) {
            let d = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            };
            sq += d * d;
        }
        sq.sqrt()
    }

    fn extend(&mut self, v: &[f64]) {
        for ((x, lo), hi) in v.iter().zip(self.lo.iter_mut()).zip(self.hi.iter_mut()) {
            *lo = lo.min(*x);
            *hi = hi.max(*x);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    pub formation_epsilon: f64,
    pub training_count: usize,
    pub normalization: Normalization,
}

fn check_dims(vectors: &[Vec<f64>], expected: usize) -> Result<(), AnomalyError> {
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != expected {
            return Err(AnomalyError::Dimension {
                index,
                got: v.len(),
                expected,
            });
        }
    }
    Ok(())
}

/// Fits normalization on `vectors` and clusters them in file order.
pub fn train(vectors: &[Vec<f64>], epsilon: f64) -> Result<ClusterSet, AnomalyError> {
    let first = vectors.first().ok_or(AnomalyError::Empty)?;
    check_dims(vectors, first.len())?;
    let norm = Normalization::fit(vectors);
    train_with(vectors, epsilon, norm)
}

/// Clusters `vectors` under a fixed normalization.
pub fn train_with(
    vectors: &[Vec<f64>],
    epsilon: f64,
    normalization: Normalization,
) -> Result<ClusterSet, AnomalyError> {
    if vectors.is_empty() {
        return Err(AnomalyError::Empty);
    }
    check_dims(vectors, normalization.dim())?;
    let mut clusters: Vec<Cluster> = Vec::new();
    for raw in vectors {
        let v = normalization.apply(raw);
        let nearest = clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.distance(&v)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, d)) if d <= epsilon => clusters[i].extend(&v),
            _ => clusters.push(Cluster::point(&v)),
        }
    }
    Ok(ClusterSet {
        clusters,
        formation_epsilon: epsilon,
        training_count: vectors.len(),
        normalization,
    })
}

impl ClusterSet {
    pub fn dim(&self) -> usize {
        self.normalization.dim()
    }

    /// δ for a raw (unnormalized) vector.
    pub fn distance(&self, v: &[f64]) -> f64 {
        self.distance_normalized(&self.normalization.apply(v))
    }

    pub fn distance_normalized(&self, v: &[f64]) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.distance(v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsCalibration {
    /// Held-out δ values, ascending.
    pub distances: Vec<f64>,
    pub quantile_threshold: f64,
    pub threshold_distance: f64,
}

/// Empirical quantile with linear interpolation between order statistics:
/// `h = (n − 1)·q`, value `d[⌊h⌋] + (h − ⌊h⌋)·(d[⌊h⌋+1] − d[⌊h⌋])`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn calibrate(
    cs: &ClusterSet,
    held_out: &[Vec<f64>],
    q: f64,
) -> Result<MmsCalibration, AnomalyError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(AnomalyError::BadQuantile(q));
    }
    if held_out.len() < MIN_HELD_OUT {
        return Err(AnomalyError::TooFewHeldOut {
            min: MIN_HELD_OUT,
            got: held_out.len(),
        });
    }
    check_dims(held_out, cs.dim())?;
    let mut distances: Vec<f64> = held_out.iter().map(|v| cs.distance(v)).collect();
    distances.sort_by(f64::total_cmp);
    let threshold_distance = quantile(&distances, q);
    Ok(MmsCalibration {
        distances,
        quantile_threshold: q,
        threshold_distance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Nominal,
    Anomaly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub verdict: Verdict,
    pub delta: f64,
    pub empirical_quantile: f64,
}

pub fn score(cs: &ClusterSet, cal: &MmsCalibration, v: &[f64]) -> Score {
    let delta = cs.distance(v);
    let below = cal.distances.partition_point(|d| *d <= delta);
    Score {
        verdict: if delta > cal.threshold_distance {
            Verdict::Anomaly
        } else {
            Verdict::Nominal
        },
        delta,
        empirical_quantile: below as f64 / cal.distances.len() as f64,
    }
}

/// Line-delimited training records: comma- or whitespace-separated numbers,
/// `#` comments and blank lines ignored.
pub fn parse_records(text: &str) -> Result<Vec<Vec<f64>>, AnomalyError> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let rec: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let rec = rec.map_err(|e| AnomalyError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = out.first() {
            if first.len() != rec.len() {
                return Err(AnomalyError::Record {
                    line: i + 1,
                    message: format!("expected {} values, got {}", first.len(), rec.len()),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxes(clusters: Vec<Cluster>) -> ClusterSet {
        let dim = clusters[0].lo.len();
        ClusterSet {
            clusters,
            formation_epsilon: 0.0,
            training_count: 0,
            normalization: Normalization::identity(dim),
        }
    }

    #[test]
    fn identical_vectors_one_point_cluster() {
        let cs = train(&vec![vec![1.0, 2.0]; 10], 0.1).unwrap();
        assert_eq!(cs.clusters.len(), 1);
        assert_eq!(cs.clusters[0].lo, cs.clusters[0].hi);
    }

    #[test]
    fn far_vectors_two_clusters() {
        let cs = train_with(&[vec![0.0], vec![10.0]], 1.0, Normalization::identity(1)).unwrap();
        assert_eq!(cs.clusters.len(), 2);
    }

    #[test]
    fn box_distances() {
        let cs = boxes(vec![Cluster {
            lo: vec![0.0],
            hi: vec![1.0],
        }]);
        assert_eq!(cs.distance(&[0.5]), 0.0);
        assert_eq!(cs.distance(&[3.0]), 2.0);
        let cs = boxes(vec![Cluster {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        }]);
        assert!((cs.distance(&[2.0, 2.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 0.0, 1.0, 1.0], 0.5), 0.5);
        let d: Vec<f64> = (0..1000).map(f64::from).collect();
        let q = quantile(&d, 0.99);
        assert!(q > d[989] && q < d[990]);
    }

    #[test]
    fn calibration_and_scoring() {
        let cs = boxes(vec![Cluster {
            lo: vec![0.0],
            hi: vec![1.0],
        }]);
        let inside: Vec<Vec<f64>> = (0..60).map(|i| vec![f64::from(i) / 60.0]).collect();
        let cal = calibrate(&cs, &inside, 0.99).unwrap();
        assert_eq!(cal.threshold_distance, 0.0);
        assert_eq!(score(&cs, &cal, &[0.5]).verdict, Verdict::Nominal);
        let s = score(&cs, &cal, &[1.5]);
        assert_eq!(s.verdict, Verdict::Anomaly);
        assert_eq!(s.empirical_quantile, 1.0);
        assert!(matches!(
            calibrate(&cs, &inside[..10], 0.99),
            Err(AnomalyError::TooFewHeldOut { .. })
        ));
        assert!(matches!(
            calibrate(&cs, &inside, 1.0),
            Err(AnomalyError::BadQuantile(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(
            train(&[vec![1.0], vec![1.0, 2.0]], 0.1),
            Err(AnomalyError::Dimension { index: 1, .. })
        ));
        assert!(matches!(train(&[], 0.1), Err(AnomalyError::Empty)));
    }

    #[test]
    fn records_and_json() {
        let recs = parse_records("1, 2\n# c\n3 4\n").unwrap();
        assert_eq!(recs, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(parse_records("1,2\n3\n").is_err());
        let cs = train(&recs, 0.5).unwrap();
        assert_eq!(ClusterSet::from_json(&cs.to_json()).unwrap(), cs);
    }
}
