//! Brute-force consistency checks for D-matrix isolation, plus random
//! D-matrices.

use std::collections::BTreeSet;

use rand::Rng;
use vsm_core::isolation::{
    isolate, isolate_multi, DMatrix, Isolation, Outcome, TestDef, TestResults,
};

/// Whether the set of modes `set` explains `results`: every failing test
/// covers a member and no passing test covers any.
pub fn explains(dm: &DMatrix, results: &TestResults, set: &[usize]) -> bool {
    results.outcomes.iter().enumerate().all(|(t, o)| {
        let hit = set.iter().any(|&m| dm.covers(t, m));
        match o {
            Outcome::Fail => hit,
            Outcome::Pass => !hit,
            Outcome::Unknown => true,
        }
    })
}

/// Every single mode consistent with `results`; empty when nothing failed.
pub fn consistent_singles(dm: &DMatrix, results: &TestResults) -> BTreeSet<String> {
    if !results.any_failed() {
        return BTreeSet::new();
    }
    (0..dm.modes().len())
        .filter(|&m| explains(dm, results, &[m]))
        .map(|m| dm.modes()[m].clone())
        .collect()
}

/// All minimum-cardinality explaining sets up to `max_k`, by enumeration.
pub fn min_diagnoses(dm: &DMatrix, results: &TestResults, max_k: usize) -> Vec<Vec<String>> {
    fn go(
        dm: &DMatrix,
        r: &TestResults,
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut BTreeSet<Vec<String>>,
    ) {
        if cur.len() == k {
            if explains(dm, r, cur) {
                let mut names: Vec<String> = cur.iter().map(|&m| dm.modes()[m].clone()).collect();
                names.sort();
                out.insert(names);
            }
            return;
        }
        for m in start..dm.modes().len() {
            cur.push(m);
            go(dm, r, k, m + 1, cur, out);
            cur.pop();
        }
    }
    if !results.any_failed() {
        return Vec::new();
    }
    for k in 1..=max_k {
        let mut out = BTreeSet::new();
        go(dm, results, k, 0, &mut Vec::new(), &mut out);
        if !out.is_empty() {
            return out.into_iter().collect();
        }
    }
    Vec::new()
}

/// Perfect-test outcomes with every mode in `active` present.
pub fn union_signature(dm: &DMatrix, active: &[usize]) -> TestResults {
    TestResults {
        outcomes: (0..dm.tests().len())
            .map(|t| {
                if active.iter().any(|&m| dm.covers(t, m)) {
                    Outcome::Fail
                } else {
                    Outcome::Pass
                }
            })
            .collect(),
    }
}

/// Diagnoses the way the fault manager reports them: the single-fault
/// group as singletons, else the multiple-fault hitting sets.
pub fn pipeline_diagnoses(dm: &DMatrix, results: &TestResults, max_k: usize) -> Vec<Vec<String>> {
    match isolate(dm, results) {
        Isolation::Group(g) => g.modes.into_iter().map(|m| vec![m]).collect(),
        Isolation::NoFault => Vec::new(),
        Isolation::Inconsistent => isolate_multi(dm, results, max_k),
    }
}

pub fn gen_dmatrix<R: Rng>(rng: &mut R, max_modes: usize, max_tests: usize) -> DMatrix {
    let n = rng.random_range(1..=max_modes);
    let modes: Vec<String> = (0..n).map(|m| format!("m{m}")).collect();
    let tests = (0..rng.random_range(1..=max_tests))
        .map(|t| {
            let mut covers: Vec<String> = modes
                .iter()
                .filter(|_| rng.random_bool(0.25))
                .cloned()
                .collect();
            if covers.is_empty() {
                covers.push(modes[rng.random_range(0..n)].clone());
            }
            TestDef {
                id: format!("t{t}"),
                parameter: format!("p{t}"),
                lo: 0.0,
                hi: 1.0,
                covers,
            }
        })
        .collect();
    DMatrix::new(modes, tests).expect("generated D-matrix is valid")
}

pub fn gen_results<R: Rng>(rng: &mut R, dm: &DMatrix) -> TestResults {
    if rng.random_bool(0.6) {
        // Mostly-consistent outcomes: signature of a few modes, some masked.
        let active: Vec<usize> = (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(0..dm.modes().len()))
            .collect();
        let mut r = union_signature(dm, &active);
        for o in &mut r.outcomes {
            if rng.random_bool(0.15) {
                *o = Outcome::Unknown;
            }
        }
        r
    } else {
        let all = [Outcome::Pass, Outcome::Fail, Outcome::Unknown];
        TestResults {
            outcomes: (0..dm.tests().len())
                .map(|_| all[rng.random_range(0..3)])
                .collect(),
        }
    }
}
