//! Synthetic nominal data with known separation: tight Gaussian clusters
//! spread across a wide box, so a bias of a few normalized units leaves
//! every cluster behind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub struct Generator {
    centers: Vec<Vec<f64>>,
    spread: f64,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(seed: u64, dim: usize, clusters: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..clusters)
            .map(|_| (0..dim).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        Self {
            centers,
            spread: 0.05,
            rng,
        }
    }

    pub fn sample(&mut self) -> Vec<f64> {
        let c = &self.centers[self.rng.random_range(0..self.centers.len())];
        let noise = Normal::new(0.0, self.spread).expect("positive spread");
        c.iter().map(|x| x + noise.sample(&mut self.rng)).collect()
    }

    pub fn samples(&mut self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample()).collect()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Outcome of one calibration experiment.
#[derive(Debug, Clone, Copy)]
pub struct Rates {
    pub false_alarm: f64,
    pub detection: f64,
}

/// Trains on 6000 vectors, calibrates on 3000 at quantile `q`, then
/// scores 10 000 fresh nominal vectors and 10 000 fresh vectors with a
/// `bias` (normalized units) added to one random dimension.
pub fn experiment(seed: u64, q: f64, bias: f64) -> Rates {
    use vsm_core::anomaly::{calibrate, score, train, Verdict};
    let mut g = Generator::new(seed, 8, 4);
    let cs = train(&g.samples(6000), 0.5).expect("training data");
    let cal = calibrate(&cs, &g.samples(3000), q).expect("held-out data");
    let n = 10_000;
    let alarms = (0..n)
        .filter(|_| score(&cs, &cal, &g.sample()).verdict == Verdict::Anomaly)
        .count();
    let detected = (0..n)
        .filter(|_| {
            let mut v = g.sample();
            let d = g.rng().random_range(0..v.len());
            let sign = if g.rng().random_bool(0.5) { 1.0 } else { -1.0 };
            v[d] += sign * bias * cs.normalization.scale[d];
            score(&cs, &cal, &v).verdict == Verdict::Anomaly
        })
        .count();
    Rates {
        false_alarm: alarms as f64 / n as f64,
        detection: detected as f64 / n as f64,
    }
}
