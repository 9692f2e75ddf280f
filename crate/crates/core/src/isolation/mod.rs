//! Limit-test evaluation and D-matrix fault isolation.
//!
//! Each test checks one parameter against a closed interval and covers the
//! failure modes that can make it fail. Under the single-fault assumption a
//! passing test exonerates every mode it covers and a failing test implicates
//! only modes it covers; UNKNOWN outcomes constrain nothing. When no single
//! mode explains the failures, [`isolate_multi`] returns the
//! minimum-cardinality hitting sets of the failing tests' residual covers.

pub mod bench;
mod debounce;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{ParamDict, SensorFrame};

pub use debounce::Debouncer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDef {
    pub id: String,
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub covers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail,
    Unknown,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Unknown => "UNKNOWN",
        })
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PASS" => Ok(Outcome::Pass),
            "FAIL" => Ok(Outcome::Fail),
            "UNKNOWN" => Ok(Outcome::Unknown),
            _ => Err(format!("unknown test outcome `{s}`")),
        }
    }
}

/// One outcome per test, in D-matrix test order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResults {
    pub outcomes: Vec<Outcome>,
}

impl TestResults {
    pub fn all(n: usize, outcome: Outcome) -> Self {
        Self {
            outcomes: vec![outcome; n],
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = usize> + '_ {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Outcome::Fail)
            .map(|(i, _)| i)
    }

    pub fn any_failed(&self) -> bool {
        self.outcomes.contains(&Outcome::Fail)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DMatrixError {
    #[error("test `{0}` has lo > hi")]
    InvertedBounds(String),
    #[error("test `{0}` covers no failure modes")]
    EmptyCovers(String),
    #[error("test `{test}` covers unknown failure mode `{mode}`")]
    UnknownMode { test: String, mode: String },
    #[error("duplicate id `{0}`")]
    Duplicate(String),
    #[error("unknown failure mode `{0}`")]
    NoSuchMode(String),
}

/// Test × mode incidence, stored as one mode bitset per test.
#[derive(Debug, Clone)]
pub struct DMatrix {
    modes: Vec<String>,
    mode_index: HashMap<String, usize>,
    tests: Vec<TestDef>,
    rows: Vec<FixedBitSet>,
    /// Modes no test covers.
    undetectable: Vec<String>,
}

impl DMatrix {
    pub fn new(modes: Vec<String>, tests: Vec<TestDef>) -> Result<Self, DMatrixError> {
        let mut mode_index = HashMap::with_capacity(modes.len());
        for (i, m) in modes.iter().enumerate() {
            if mode_index.insert(m.clone(), i).is_some() {
                return Err(DMatrixError::Duplicate(m.clone()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut rows = Vec::with_capacity(tests.len());
        let mut covered = FixedBitSet::with_capacity(modes.len());
        for t in &tests {
            if !seen.insert(t.id.as_str()) {
                return Err(DMatrixError::Duplicate(t.id.clone()));
            }
            if t.lo > t.hi {
                return Err(DMatrixError::InvertedBounds(t.id.clone()));
            }
            if t.covers.is_empty() {
                return Err(DMatrixError::EmptyCovers(t.id.clone()));
            }
            let mut row = FixedBitSet::with_capacity(modes.len());
            for m in &t.covers {
                let i = *mode_index.get(m).ok_or_else(|| DMatrixError::UnknownMode {
                    test: t.id.clone(),
                    mode: m.clone(),
                })?;
                row.insert(i);
            }
            covered.union_with(&row);
            rows.push(row);
        }
        let undetectable: Vec<String> = modes
            .iter()
            .enumerate()
            .filter(|(i, _)| !covered.contains(*i))
            .map(|(_, m)| m.clone())
            .collect();
        for m in &undetectable {
            log::warn!("failure mode `{m}` is not covered by any test and cannot be detected");
        }
        Ok(Self {
            modes,
            mode_index,
            tests,
            rows,
            undetectable,
        })
    }

    pub fn modes(&self) -> &[String] {
        &self.modes
    }

    pub fn tests(&self) -> &[TestDef] {
        &self.tests
    }

    pub fn undetectable(&self) -> &[String] {
        &self.undetectable
    }

    pub fn mode_index(&self, id: &str) -> Option<usize> {
        self.mode_index.get(id).copied()
    }

    pub fn covers(&self, test: usize, mode: usize) -> bool {
        self.rows[test].contains(mode)
    }

    pub fn row(&self, test: usize) -> &FixedBitSet {
        &self.rows[test]
    }

    pub fn test_index(&self, id: &str) -> Option<usize> {
        self.tests.iter().position(|t| t.id == id)
    }

    pub fn results_by_id(&self, results: &TestResults) -> Vec<(String, Outcome)> {
        self.tests
            .iter()
            .zip(&results.outcomes)
            .map(|(t, o)| (t.id.clone(), *o))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityGroup {
    pub modes: Vec<String>,
    pub exact: bool,
}

impl AmbiguityGroup {
    pub fn new(mut modes: Vec<String>) -> Self {
        modes.sort();
        let exact = modes.len() == 1;
        Self { modes, exact }
    }

    pub fn contains(&self, mode: &str) -> bool {
        self.modes.iter().any(|m| m == mode)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Isolation {
    NoFault,
    Group(AmbiguityGroup),
    Inconsistent,
}

/// Precomputed test → frame-index mapping for one parameter dictionary.
#[derive(Debug, Clone)]
pub struct TestEvaluator {
    bounds: Vec<(Option<usize>, f64, f64)>,
    pub warnings: Vec<String>,
}

impl TestEvaluator {
    pub fn new(dm: &DMatrix, dict: &ParamDict) -> Self {
        let mut warnings = Vec::new();
        let bounds = dm
            .tests
            .iter()
            .map(|t| {
                let idx = dict.index_of(&t.parameter);
                if idx.is_none() {
                    let w = format!(
                        "test `{}` references parameter `{}` absent from the frame",
                        t.id, t.parameter
                    );
                    log::warn!("{w}");
                    warnings.push(w);
                }
                (idx, t.lo, t.hi)
            })
            .collect();
        Self { bounds, warnings }
    }

    /// Evaluates against raw value/staleness vectors in dictionary order.
    pub fn evaluate(&self, values: &[f64], stale: &[bool]) -> TestResults {
        let outcomes = self
            .bounds
            .iter()
            .map(|&(idx, lo, hi)| match idx {
                Some(i) if !stale[i] => {
                    let v = values[i];
                    if v >= lo && v <= hi {
                        Outcome::Pass
                    } else {
                        Outcome::Fail
                    }
                }
                _ => Outcome::Unknown,
            })
            .collect();
        TestResults { outcomes }
    }
}

/// PASS iff the value lies in `[lo, hi]`, FAIL outside, UNKNOWN when stale
/// or absent.
pub fn evaluate_tests(dm: &DMatrix, frame: &SensorFrame) -> TestResults {
    TestEvaluator::new(dm, &frame.dict).evaluate(&frame.values, &frame.stale)
}

fn exonerated(dm: &DMatrix, results: &TestResults) -> FixedBitSet {
    let mut ex = FixedBitSet::with_capacity(dm.modes.len());
    for (t, o) in results.outcomes.iter().enumerate() {
        if *o == Outcome::Pass {
            ex.union_with(&dm.rows[t]);
        }
    }
    ex
}

/// Single-fault isolation.
pub fn isolate(dm: &DMatrix, results: &TestResults) -> Isolation {
    debug_assert_eq!(results.outcomes.len(), dm.tests.len());
    let mut candidates: Option<FixedBitSet> = None;
    for t in results.failed() {
        match candidates.as_mut() {
            None => candidates = Some(dm.rows[t].clone()),
            Some(c) => c.intersect_with(&dm.rows[t]),
        }
    }
    let Some(mut candidates) = candidates else {
        return Isolation::NoFault;
    };
    candidates.difference_with(&exonerated(dm, results));
    if candidates.is_clear() {
        return Isolation::Inconsistent;
    }
    Isolation::Group(AmbiguityGroup::new(
        candidates.ones().map(|i| dm.modes[i].clone()).collect(),
    ))
}

/// All minimum-cardinality hitting sets (size ≤ `max_cardinality`) of the
/// failing tests' covers minus exonerated modes. Empty when none exists
/// within the bound, including when some failing test is fully exonerated.
pub fn isolate_multi(
    dm: &DMatrix,
    results: &TestResults,
    max_cardinality: usize,
) -> Vec<Vec<String>> {
    let ex = exonerated(dm, results);
    let mut residual: Vec<Vec<usize>> = Vec::new();
    for t in results.failed() {
        let mut r = dm.rows[t].clone();
        r.difference_with(&ex);
        let set: Vec<usize> = r.ones().collect();
        if set.is_empty() {
            return Vec::new();
        }
        residual.push(set);
    }
    if residual.is_empty() {
        return Vec::new();
    }
    residual.sort();
    residual.dedup();
    // supersets add no constraint beyond their subsets
    let sets: Vec<Vec<usize>> = residual
        .iter()
        .filter(|s| {
            !residual
                .iter()
                .any(|o| o.len() < s.len() && o.iter().all(|x| s.binary_search(x).is_ok()))
        })
        .cloned()
        .collect();

    for k in 1..=max_cardinality {
        let mut found = BTreeSet::new();
        let mut chosen = Vec::new();
        let mut forbidden = vec![false; dm.modes.len()];
        search(&sets, k, &mut chosen, &mut forbidden, &mut found);
        if !found.is_empty() {
            return found
                .into_iter()
                .map(|s: Vec<usize>| {
                    let mut names: Vec<String> =
                        s.into_iter().map(|i| dm.modes[i].clone()).collect();
                    names.sort();
                    names
                })
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
        }
    }
    Vec::new()
}

fn search(
    sets: &[Vec<usize>],
    k: usize,
    chosen: &mut Vec<usize>,
    forbidden: &mut [bool],
    found: &mut BTreeSet<Vec<usize>>,
) {
    // smallest set not yet hit
    let mut pick: Option<&Vec<usize>> = None;
    let mut pick_len = usize::MAX;
    for s in sets {
        if s.iter().any(|m| chosen.contains(m)) {
            continue;
        }
        let open = s.iter().filter(|&&m| !forbidden[m]).count();
        if open == 0 {
            return;
        }
        if open < pick_len {
            pick_len = open;
            pick = Some(s);
        }
    }
    let Some(set) = pick else {
        let mut s = chosen.clone();
        s.sort_unstable();
        found.insert(s);
        return;
    };
    if chosen.len() == k {
        return;
    }
    let options: Vec<usize> = set.iter().copied().filter(|&m| !forbidden[m]).collect();
    let mut newly = Vec::new();
    for m in options {
        chosen.push(m);
        search(sets, k, chosen, forbidden, found);
        chosen.pop();
        forbidden[m] = true;
        newly.push(m);
    }
    for m in newly {
        forbidden[m] = false;
    }
}

/// Reads `<test_id> PASS|FAIL|UNKNOWN` lines; unlisted tests are UNKNOWN.
/// `#` starts a comment.
pub fn parse_results(
    dm: &DMatrix,
    file: &str,
    text: &str,
) -> Result<TestResults, crate::sections::ParseError> {
    use crate::sections::{Location, ParseError};
    let mut results = TestResults::all(dm.tests().len(), Outcome::Unknown);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| {
            ParseError::new(
                Location {
                    file: file.to_string(),
                    line: i + 1,
                },
                m,
            )
        };
        let mut words = line.split_whitespace();
        let (Some(id), Some(outcome), None) = (words.next(), words.next(), words.next()) else {
            return Err(err("expected `<test_id> PASS|FAIL|UNKNOWN`".into()));
        };
        let t = dm
            .test_index(id)
            .ok_or_else(|| err(format!("unknown test `{id}`")))?;
        results.outcomes[t] = outcome.parse().map_err(err)?;
    }
    Ok(results)
}

/// Expected outcomes if `mode` alone were active with perfect tests.
pub fn signature(dm: &DMatrix, mode: &str) -> Result<TestResults, DMatrixError> {
    let m = dm
        .mode_index(mode)
        .ok_or_else(|| DMatrixError::NoSuchMode(mode.to_string()))?;
    Ok(TestResults {
        outcomes: dm
            .rows
            .iter()
            .map(|r| {
                if r.contains(m) {
                    Outcome::Fail
                } else {
                    Outcome::Pass
                }
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: &str, covers: &[&str]) -> TestDef {
        TestDef {
            id: id.into(),
            parameter: format!("{id}.p"),
            lo: 0.0,
            hi: 1.0,
            covers: covers.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn dm(modes: &[&str], tests: Vec<TestDef>) -> DMatrix {
        DMatrix::new(modes.iter().map(|s| s.to_string()).collect(), tests).unwrap()
    }

    fn res(o: &[Outcome]) -> TestResults {
        TestResults {
            outcomes: o.to_vec(),
        }
    }

    use Outcome::{Fail, Pass, Unknown};

    #[test]
    fn exoneration_narrows_group() {
        let d = dm(
            &["A", "B", "C"],
            vec![t("T1", &["A", "B"]), t("T2", &["B"])],
        );
        assert_eq!(
            isolate(&d, &res(&[Fail, Pass])),
            Isolation::Group(AmbiguityGroup::new(vec!["A".into()]))
        );
        let d = dm(
            &["A", "B", "C"],
            vec![t("T1", &["A", "B"]), t("T2", &["C"])],
        );
        let Isolation::Group(g) = isolate(&d, &res(&[Fail, Pass])) else {
            panic!()
        };
        assert_eq!(g.modes, vec!["A", "B"]);
        assert!(!g.exact);
        assert_eq!(isolate(&d, &res(&[Pass, Pass])), Isolation::NoFault);
        assert_eq!(isolate(&d, &res(&[Unknown, Unknown])), Isolation::NoFault);
    }

    #[test]
    fn inconsistent_and_multi() {
        let d = dm(
            &["A", "B", "C"],
            vec![t("T1", &["A", "B"]), t("T2", &["C"])],
        );
        let r = res(&[Fail, Fail]);
        assert_eq!(isolate(&d, &r), Isolation::Inconsistent);
        assert_eq!(
            isolate_multi(&d, &r, 3),
            vec![
                vec!["A".to_string(), "C".into()],
                vec!["B".to_string(), "C".into()]
            ]
        );
    }

    #[test]
    fn multi_single_and_conflict() {
        let d = dm(&["A", "B"], vec![t("T1", &["A"]), t("T2", &["A"])]);
        assert_eq!(
            isolate_multi(&d, &res(&[Fail, Fail]), 3),
            vec![vec!["A".to_string()]]
        );
        let d = dm(&["A", "B"], vec![t("T1", &["B"]), t("T2", &["B"])]);
        assert!(isolate_multi(&d, &res(&[Fail, Pass]), 3).is_empty());
    }

    #[test]
    fn signature_and_undetectable() {
        let d = dm(
            &["A", "B", "Z"],
            vec![t("T1", &["A"]), t("T2", &["B"]), t("T3", &["A"])],
        );
        assert_eq!(signature(&d, "A").unwrap(), res(&[Fail, Pass, Fail]));
        assert_eq!(signature(&d, "Z").unwrap(), res(&[Pass, Pass, Pass]));
        assert_eq!(d.undetectable(), &["Z".to_string()]);
        assert!(signature(&d, "nope").is_err());
    }

    #[test]
    fn closed_interval_and_stale() {
        use crate::sim::model::{ParamDef, Source};
        let dict = ParamDict::new(vec![
            ParamDef {
                id: "T1.p".into(),
                source: Source::Env(0),
                noise: 0.0,
            },
            ParamDef {
                id: "T2.p".into(),
                source: Source::Env(1),
                noise: 0.0,
            },
        ]);
        let d = dm(
            &["A"],
            vec![t("T1", &["A"]), t("T2", &["A"]), t("T3", &["A"])],
        );
        let ev = TestEvaluator::new(&d, &dict);
        assert_eq!(ev.warnings.len(), 1);
        assert_eq!(
            ev.evaluate(&[0.0, 1.0], &[false, false]),
            res(&[Pass, Pass, Unknown])
        );
        assert_eq!(
            ev.evaluate(&[1.0 + 1e-12, 0.5], &[false, true]),
            res(&[Fail, Unknown, Unknown])
        );
    }

    #[test]
    fn rejects_bad_matrices() {
        let mut bad = t("T1", &["A"]);
        bad.lo = 2.0;
        assert!(DMatrix::new(vec!["A".into()], vec![bad]).is_err());
        assert!(DMatrix::new(vec!["A".into()], vec![t("T1", &[])]).is_err());
        assert!(DMatrix::new(vec!["A".into()], vec![t("T1", &["Q"])]).is_err());
    }
}
