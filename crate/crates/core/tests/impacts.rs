mod common;

use common::fir_oracle::{compare_graph, gen_graph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn max_flow_oracle_agrees_with_menger_cut() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nontrivial = 0;
    for _ in 0..300 {
        let rg = gen_graph(&mut rng, 10);
        for (_, sources, consumers) in &rg.functions {
            for &c in consumers {
                for removed in [vec![], rg.failed.clone()] {
                    let flow = rg.redundancy_oracle(sources, c, &removed);
                    assert_eq!(
                        flow,
                        rg.min_cut_bruteforce(sources, c, &removed),
                        "{rg:?} consumer v{c}"
                    );
                    nontrivial += usize::from(flow >= 2 && flow != vsm_core::impacts::UNBOUNDED);
                }
            }
        }
    }
    assert!(nontrivial > 50, "{nontrivial}");
}

#[test]
fn random_graphs_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lost = 0;
    for _ in 0..200 {
        let rg = gen_graph(&mut rng, 20);
        compare_graph(&rg).unwrap();
        lost += rg
            .component_graph()
            .impact_set(&rg.failed_names())
            .unwrap()
            .len();
    }
    assert!(lost > 100, "{lost}");
}

proptest! {
    #[test]
    fn impacts_equal_oracles(seed in any::<u64>()) {
        let rg = gen_graph(&mut ChaCha8Rng::seed_from_u64(seed), 20);
        if let Err(e) = compare_graph(&rg) {
            prop_assert!(false, "{}", e);
        }
    }
}
