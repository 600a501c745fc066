mod common;

use proptest::prelude::*;
use splitshare_core::placement::PlacementError;
use splitshare_core::{build_shared_catalog, brute_force_place, greedy_place, total_latency, GenParams};

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn planning_and_simulation_invariants(seed in any::<u64>()) {
        let s = common::generated(seed);
        if let Err(e) = common::check_invariants(&s) {
            prop_assert!(false, "seed {}: {}", seed, e);
        }
    }

    #[test]
    fn brute_force_never_worse_than_greedy(seed in any::<u64>()) {
        let s = splitshare_core::generate(&GenParams { seed, ..GenParams::default() }).unwrap();
        let c = build_shared_catalog(&s).unwrap();
        let optimal = match brute_force_place(&s, &c, &s.trace) {
            Ok((_, v)) => v,
            Err(PlacementError::SearchSpaceTooLarge { .. }) => return Ok(()),
            Err(e) => panic!("seed {seed}: {e}"),
        };
        if let Ok((p, _)) = greedy_place(&s, &c) {
            let g = total_latency(&s, &p, &s.trace).unwrap();
            prop_assert!(optimal <= g, "seed {}: brute {} > greedy {}", seed, optimal, g);
        }
    }
}
