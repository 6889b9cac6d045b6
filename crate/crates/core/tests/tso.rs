mod common;

use proptest::prelude::*;

use gmsneg::error::Error;
use gmsneg::tso_opt::{acceptance_weight, solve_tso, AcceptanceMode, FeasibilityCache, TsoOptions, TsoSolution};

fn opts(mode: AcceptanceMode) -> TsoOptions {
    TsoOptions {
        mode,
        ..TsoOptions::default()
    }
}

fn solve(inst: &common::TsoInstance, mode: AcceptanceMode) -> Result<TsoSolution, Error> {
    solve_tso(
        &inst.net,
        &inst.agents,
        &inst.bids,
        &inst.book,
        &opts(mode),
        &FeasibilityCache::new(),
    )
}

fn modes() -> impl Strategy<Value = AcceptanceMode> {
    prop_oneof![Just(AcceptanceMode::PerTimestep), Just(AcceptanceMode::BlockAtomic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_match_the_oracle(seed in any::<u64>(), eps in 0.05f64..3.0) {
        let inst = common::random_tso_instance(&mut common::rng(seed), false);
        for sets in &inst.book.sets {
            for t in 1..=inst.bids[0].len() {
                let w = acceptance_weight(&sets[0], t, eps);
                prop_assert!((w - common::weight_oracle(&sets[0], t, eps)).abs() <= 1e-12);
            }
        }
    }

    /// Minimum-output units make the commitment choice matter.
    #[test]
    fn min_output_matches_brute_force(seed in any::<u64>()) {
        let inst = common::random_tso_instance(&mut common::rng(seed), true);
        let oracle = common::tso_brute_force(&inst, TsoOptions::default().epsilon);
        match (solve(&inst, AcceptanceMode::PerTimestep), oracle) {
            (Ok(sol), Some(best)) => prop_assert!((sol.objective_value - best).abs() <= 1e-6 * best.abs().max(1.0)),
            (Err(Error::LoadUnsatisfiable { .. }), None) => {}
            (got, want) => prop_assert!(false, "solver {:?} vs oracle {:?}", got.map(|s| s.objective_value), want),
        }
    }

    #[test]
    fn only_bids_are_accepted(seed in any::<u64>(), mode in modes()) {
        let inst = common::random_tso_instance(&mut common::rng(seed), false);
        let Ok(sol) = solve(&inst, mode) else { return Ok(()) };
        for (y, x) in sol.y.iter().zip(&inst.bids) {
            for (&y, &x) in y.iter().zip(x) {
                prop_assert!(!y || x);
            }
        }
    }

    #[test]
    fn block_atomic_accepts_whole_blocks(seed in any::<u64>()) {
        let inst = common::random_tso_instance(&mut common::rng(seed), false);
        let Ok(sol) = solve(&inst, AcceptanceMode::BlockAtomic) else { return Ok(()) };
        for (y, x) in sol.y.iter().zip(&inst.bids) {
            let on: Vec<bool> = y.iter().zip(x).filter(|(_, &x)| x).map(|(&y, _)| y).collect();
            prop_assert!(on.iter().all(|&v| v) || on.iter().all(|&v| !v));
        }
        let free = solve(&inst, AcceptanceMode::PerTimestep).unwrap();
        prop_assert!(sol.objective_value <= free.objective_value + 1e-9);
    }

    /// Uprating every line never loses accepted weight.
    #[test]
    fn more_line_capacity_never_hurts(seed in any::<u64>(), factor in 1.0f64..3.0) {
        let inst = common::random_tso_instance(&mut common::rng(seed), false);
        let Ok(before) = solve(&inst, AcceptanceMode::PerTimestep) else { return Ok(()) };
        let mut wider = inst;
        for l in &mut wider.net.lines {
            l.capacity *= factor;
        }
        let after = solve(&wider, AcceptanceMode::PerTimestep).unwrap();
        prop_assert!(after.objective_value >= before.objective_value - 1e-9);
    }

    #[test]
    fn rejecting_everything_is_never_better(seed in any::<u64>()) {
        let inst = common::random_tso_instance(&mut common::rng(seed), false);
        let Ok(sol) = solve(&inst, AcceptanceMode::PerTimestep) else { return Ok(()) };
        prop_assert!(sol.objective_value >= 0.0);
    }
}

#[test]
fn cache_does_not_change_answers() {
    let cache = FeasibilityCache::new();
    for seed in 0..40 {
        let inst = common::random_tso_instance(&mut common::rng(seed), true);
        let o = opts(AcceptanceMode::BlockAtomic);
        let cold = solve_tso(
            &inst.net,
            &inst.agents,
            &inst.bids,
            &inst.book,
            &o,
            &FeasibilityCache::new(),
        );
        let warm = solve_tso(&inst.net, &inst.agents, &inst.bids, &inst.book, &o, &cache);
        assert_eq!(cold.map(|s| s.y).ok(), warm.map(|s| s.y).ok(), "seed {seed}");
    }
}
