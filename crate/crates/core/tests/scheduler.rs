mod common;

use common::sched_oracle::{brute_force, dp_optimum, random_problem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vsm_core::scheduler::{
    parse_problem, render_problem, solve, validate, SolveBudget, SolveStatus,
};

#[test]
fn dp_oracle_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 150 {
        let p = random_problem(&mut rng, 3, 5);
        let free = p.fixed.iter().flatten().filter(|c| c.is_none()).count();
        if free > 14 {
            continue;
        }
        assert_eq!(
            dp_optimum(&p),
            brute_force(&p),
            "problem:\n{}",
            render_problem(&p)
        );
        checked += 1;
    }
}

#[test]
fn solver_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..120 {
        let p = random_problem(&mut rng, 4, 12);
        let r = solve(&p, SolveBudget::nodes(50_000_000)).unwrap();
        let expected = dp_optimum(&p);
        match expected {
            None => assert_eq!(
                r.status,
                SolveStatus::Infeasible,
                "problem:\n{}",
                render_problem(&p)
            ),
            Some(best) => {
                assert_eq!(
                    r.status,
                    SolveStatus::Optimal,
                    "problem:\n{}",
                    render_problem(&p)
                );
                let s = r.schedule.unwrap();
                assert_eq!(
                    (s.objective_value, s.mode_changes),
                    best,
                    "problem:\n{}",
                    render_problem(&p)
                );
            }
        }
    }
}

#[test]
fn text_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let p = random_problem(&mut rng, 4, 12);
        let q = parse_problem("gen", &render_problem(&p)).unwrap();
        assert_eq!(p, q);
    }
}

#[test]
fn parse_errors_name_the_line() {
    let err = parse_problem("x.prob", "[problem]\nhorizon_s = 600\nslot_s = 60\n[loads]\na power_w=10\n[duty]\nb min_on_s=60 period_s=120\n")
        .unwrap_err();
    assert_eq!(err.location.line, 7);
    assert!(err.message.contains("unknown load"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_always_validate(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, 4, 10);
        let r = solve(&p, SolveBudget::nodes(20_000)).unwrap();
        if let Some(s) = r.schedule {
            let report = validate(&p, &s.modes);
            prop_assert!(report.ok(), "{:?}", report.violations);
        }
    }
}
