//! Synthetic D-matrices for timing isolation at large scale.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{isolate, DMatrix, Debouncer, Isolation, TestDef, TestEvaluator};
use crate::sim::{ParamDef, ParamDict, Source};

/// Random D-matrix where each test covers `cover` modes and each mode is
/// covered by at least one test. Deterministic in `seed`.
pub fn synthetic_dmatrix(modes: usize, tests: usize, cover: usize, seed: u64) -> DMatrix {
    assert!(
        modes > 0 && tests > 0,
        "need at least one mode and one test"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..modes).map(|m| format!("m{m:05}")).collect();
    let mut covers: Vec<Vec<usize>> = (0..tests)
        .map(|_| sample(&mut rng, modes, cover.clamp(1, modes)).into_vec())
        .collect();
    for m in 0..modes {
        if !covers.iter().any(|c| c.contains(&m)) {
            let t = rng.random_range(0..tests);
            covers[t].push(m);
        }
    }
    let defs = covers
        .into_iter()
        .enumerate()
        .map(|(t, c)| TestDef {
            id: format!("t{t:05}"),
            parameter: format!("p{t:05}"),
            lo: 0.0,
            hi: 1.0,
            covers: c.into_iter().map(|m| names[m].clone()).collect(),
        })
        .collect();
    DMatrix::new(names, defs).expect("synthetic matrix is well formed")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub modes: usize,
    pub tests: usize,
    pub frames: usize,
    pub faults_isolated: usize,
    /// Confirmed groups that contained the injected mode.
    pub correct: usize,
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Runs `frames` evaluate + debounce + isolate cycles against a synthetic
/// matrix with one parameter per test. Each injected fault persists for
/// `k + 1` frames so it is confirmed on the last of them.
pub fn bench_isolation(modes: usize, tests: usize, frames: usize, seed: u64) -> BenchReport {
    let cover = (modes / 100).max(4);
    let dm = synthetic_dmatrix(modes, tests, cover, seed);
    let k = 3;
    let dict = ParamDict::new(
        (0..tests)
            .map(|t| ParamDef {
                id: format!("p{t:05}"),
                source: Source::Env(t),
                noise: 0.0,
            })
            .collect(),
    );
    let eval = TestEvaluator::new(&dm, &dict);
    let stale = vec![false; tests];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x15);
    let mut deb = Debouncer::new(tests, k);
    let mut times = Vec::with_capacity(frames);
    let mut truth = String::new();
    let mut values = vec![0.5; tests];
    let (mut isolated, mut correct) = (0, 0);
    for f in 0..frames {
        if f % (k as usize + 1) == 0 {
            let m = rng.random_range(0..modes);
            truth = dm.modes()[m].clone();
            for (t, v) in values.iter_mut().enumerate() {
                *v = if dm.covers(t, m) { 2.0 } else { 0.5 };
            }
        }
        let t0 = Instant::now();
        let raw = eval.evaluate(&values, &stale);
        let results = deb.update(&raw);
        let verdict = results.any_failed().then(|| isolate(&dm, &results));
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        if let Some(v) = verdict {
            isolated += 1;
            if matches!(&v, Isolation::Group(g) if g.contains(&truth)) {
                correct += 1;
            }
        }
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1);
    BenchReport {
        modes,
        tests,
        frames,
        faults_isolated: isolated,
        correct,
        mean_ms: times.iter().sum::<f64>() / n as f64,
        p99_ms: sorted
            .get(((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1)
            .copied()
            .unwrap_or(0.0),
        max_ms: sorted.last().copied().unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_mode_detectable_and_deterministic() {
        let a = synthetic_dmatrix(200, 50, 3, 9);
        assert!(a.undetectable().is_empty());
        let b = synthetic_dmatrix(200, 50, 3, 9);
        assert_eq!(a.tests(), b.tests());
    }

    #[test]
    fn small_bench_isolates_every_confirmation() {
        let r = bench_isolation(300, 120, 40, 1);
        assert_eq!(r.faults_isolated, 10);
        assert_eq!(r.correct, r.faults_isolated);
    }
}
