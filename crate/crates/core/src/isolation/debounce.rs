use super::{Outcome, TestResults};

/// Per-test FAIL debounce.
///
/// A test reports FAIL only once its raw outcome has failed on `k + 1`
/// consecutive frames, so a fault that fails a test from its injection frame
/// is confirmed `k` frames later. Frames in between report UNKNOWN, which
/// neither implicates nor exonerates. Any PASS or UNKNOWN resets the run.
#[derive(Debug, Clone)]
pub struct Debouncer {
    k: u32,
    runs: Vec<u32>,
}

impl Debouncer {
    pub fn new(tests: usize, k: u32) -> Self {
        Self {
            k,
            runs: vec![0; tests],
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn update(&mut self, raw: &TestResults) -> TestResults {
        let outcomes = raw
            .outcomes
            .iter()
            .zip(self.runs.iter_mut())
            .map(|(o, run)| match o {
                Outcome::Fail => {
                    *run = run.saturating_add(1);
                    if *run > self.k {
                        Outcome::Fail
                    } else {
                        Outcome::Unknown
                    }
                }
                other => {
                    *run = 0;
                    *other
                }
            })
            .collect();
        TestResults { outcomes }
    }

    pub fn reset(&mut self) {
        self.runs.iter_mut().for_each(|r| *r = 0);
    }
}
