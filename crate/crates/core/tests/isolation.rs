mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;

use common::iso_oracle::*;
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vsm_core::diagnosis::DiagnosisModel;
use vsm_core::habitat;
use vsm_core::isolation::{
    evaluate_tests, isolate, isolate_multi, Debouncer, Isolation, Outcome, TestResults,
};
use vsm_core::orchestrator::FaultStatus;
use vsm_core::scenario::{parse_scenario, Run, RunOptions};

const K: u32 = 3;

fn habitat_dm() -> DiagnosisModel {
    DiagnosisModel::parse("habitat.dmx", &habitat::dmx_text()).unwrap()
}

#[test]
fn every_single_fault_confirms_to_the_consistent_set() {
    let dm = habitat_dm().dmatrix;
    assert_eq!(dm.modes().len(), 159);
    for (m, id) in dm.modes().iter().enumerate() {
        let sig = union_signature(&dm, &[m]);
        let mut deb = Debouncer::new(dm.tests().len(), K);
        for frame in 0..K {
            assert_eq!(
                isolate(&dm, &deb.update(&sig)),
                Isolation::NoFault,
                "{id} frame {frame}"
            );
        }
        let confirmed = deb.update(&sig);
        let Isolation::Group(g) = isolate(&dm, &confirmed) else {
            panic!("{id} not isolated")
        };
        let got: BTreeSet<String> = g.modes.iter().cloned().collect();
        assert_eq!(got, consistent_singles(&dm, &confirmed), "{id}");
        assert!(got.contains(id));
    }
}

#[test]
fn double_faults_isolate_or_have_a_smaller_explanation() {
    let dm = habitat_dm().dmatrix;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut hits, mut excused) = (0, 0);
    for _ in 0..200 {
        let pair = sample(&mut rng, dm.modes().len(), 2).into_vec();
        let results = union_signature(&dm, &pair);
        let mut want: Vec<String> = pair.iter().map(|&m| dm.modes()[m].clone()).collect();
        want.sort();
        let got = pipeline_diagnoses(&dm, &results, 2);
        if got.contains(&want) {
            hits += 1;
            continue;
        }
        let oracle = min_diagnoses(&dm, &results, 2);
        assert!(
            oracle.iter().all(|d| d.len() < 2),
            "{want:?} missed without a smaller explanation: {got:?}"
        );
        excused += 1;
    }
    assert!(
        hits >= 190,
        "{hits} of 200 double faults isolated ({excused} excused)"
    );
}

#[test]
fn multiple_fault_sets_equal_enumeration_on_habitat_pairs() {
    let dm = habitat_dm().dmatrix;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let pair = sample(&mut rng, dm.modes().len(), 2).into_vec();
        let results = union_signature(&dm, &pair);
        assert_eq!(
            isolate_multi(&dm, &results, 2),
            min_diagnoses(&dm, &results, 2),
            "{pair:?}"
        );
    }
}

/// Closed loop on a sample of the catalog: the first fault event after an
/// injection is the brute-force consistent set of independently debounced
/// outcomes, `K` cycles after the fault becomes active.
#[test]
fn closed_loop_groups_match_debounced_oracle() {
    let scenario = parse_scenario(
        &PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/nominal.scn"),
    )
    .unwrap();
    let dm = &scenario.models.diagnosis.dmatrix;
    let out = tempfile::tempdir().unwrap();
    let mut confirmed = 0;
    for id in dm.modes().iter().step_by(4) {
        let opts = RunOptions {
            duration_s: Some(45.0),
            out_dir: out.path().to_path_buf(),
            ..Default::default()
        };
        let mut run = Run::new(&scenario, &opts).unwrap();
        let mut runs = vec![0u32; dm.tests().len()];
        let mut symptom = false;
        let mut active = None;
        let mut first = None;
        while !run.is_done() {
            if run.sim().cycle() == 30 {
                run.inject_now(id).unwrap();
            }
            let rep = run.step().unwrap();
            let raw = evaluate_tests(dm, run.last_frame().unwrap());
            let debounced = TestResults {
                outcomes: raw
                    .outcomes
                    .iter()
                    .zip(&mut runs)
                    .map(|(o, r)| {
                        *r = if *o == Outcome::Fail { *r + 1 } else { 0 };
                        match o {
                            Outcome::Fail if *r <= K => Outcome::Unknown,
                            o => *o,
                        }
                    })
                    .collect(),
            };
            if active.is_none() && run.sim().active_faults().contains(id) {
                active = Some(rep.cycle);
            }
            symptom |= active.is_some() && raw.any_failed();
            if let (Some(f), None) = (&rep.fault, &first) {
                assert_eq!(f.status, FaultStatus::Isolated, "{id}");
                let got: BTreeSet<String> = f.group.modes.iter().cloned().collect();
                assert_eq!(got, consistent_singles(dm, &debounced), "{id}");
                assert!(got.contains(id), "{id}: {got:?}");
                assert_eq!(Some(rep.cycle), active.map(|a| a + K as u64), "{id}");
                first = Some(rep.cycle);
            }
        }
        match first {
            Some(_) => confirmed += 1,
            // A latent fault, such as a relay stuck in the state it was
            // already commanded to, fails no test.
            None => assert!(!symptom, "{id} failed tests but was never reported"),
        }
    }
    assert!(confirmed >= 30, "{confirmed}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_dmatrix_isolation_equals_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dm = gen_dmatrix(&mut rng, 12, 10);
        let results = gen_results(&mut rng, &dm);
        let single = consistent_singles(&dm, &results);
        match isolate(&dm, &results) {
            Isolation::NoFault => prop_assert!(!results.any_failed()),
            Isolation::Group(g) => prop_assert_eq!(g.modes.into_iter().collect::<BTreeSet<_>>(), single),
            Isolation::Inconsistent => prop_assert!(results.any_failed() && single.is_empty()),
        }
        prop_assert_eq!(isolate_multi(&dm, &results, 3), min_diagnoses(&dm, &results, 3));
    }
}
