mod common;

use std::collections::BTreeMap;

use common::{brute_force, random_instance};
use mdc_auction::wdp::{solve, ExactSolver};
use mdc_auction::{
    check_feasible, solve_exact, solve_greedy, Bid, Error, Money, ResourceVector, SolverKind, TieRule, WdpInstance,
};
use proptest::prelude::*;

fn instance_strategy() -> impl Strategy<Value = WdpInstance> {
    (1usize..=3, 1usize..=3)
        .prop_flat_map(|(d, m)| {
            let bid = (0i64..=15, prop::collection::vec(0i64..=6, d));
            let cap = prop::collection::vec(0i64..=12, d);
            (prop::collection::vec(bid, 0..=7), prop::collection::vec(cap, m))
        })
        .prop_map(|(bids, caps)| {
            let bids = bids
                .into_iter()
                .enumerate()
                .map(|(buyer, (amount, demand))| Bid {
                    buyer,
                    round: 1,
                    amount: Money::from_units(amount),
                    demand: ResourceVector::from_units(&demand),
                })
                .collect();
            let caps = caps
                .into_iter()
                .enumerate()
                .map(|(j, c)| (j, ResourceVector::from_units(&c)))
                .collect();
            WdpInstance::new(bids, caps).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_matches_enumeration(inst in instance_strategy()) {
        let sol = solve_exact(&inst).unwrap();
        let (assignment, value) = brute_force(&inst);
        prop_assert_eq!(sol.objective, value);
        prop_assert_eq!(sol.assignment, assignment);
        prop_assert!(sol.optimal);
    }

    #[test]
    fn greedy_is_feasible_and_dominated(inst in instance_strategy()) {
        let greedy = solve_greedy(&inst).unwrap();
        let exact = solve_exact(&inst).unwrap();
        prop_assert!(check_feasible(&greedy.assignment, &inst).unwrap());
        prop_assert!(greedy.objective <= exact.objective);
        prop_assert_eq!(greedy.objective, inst.objective_of(&greedy.assignment));
        prop_assert!(!greedy.optimal);
    }

    #[test]
    fn more_capacity_never_hurts(inst in instance_strategy(), extra in 0i64..=4) {
        let before = solve_exact(&inst).unwrap().objective;
        let grown: BTreeMap<_, _> = inst
            .seller_caps
            .iter()
            .map(|(&j, c)| (j, c.saturating_add(&ResourceVector::from_units(&vec![extra; c.dims()]))))
            .collect();
        let after = solve_exact(&WdpInstance::new(inst.bids.clone(), grown).unwrap()).unwrap().objective;
        prop_assert!(after >= before);
    }

    #[test]
    fn tie_rules_agree_on_value(inst in instance_strategy()) {
        let low = solve(&inst, SolverKind::Exact, TieRule::LowestIndex, u64::MAX).unwrap();
        let high = solve(&inst, SolverKind::Exact, TieRule::HighestIndex, u64::MAX).unwrap();
        prop_assert_eq!(low.objective, high.objective);
        prop_assert!(check_feasible(&high.assignment, &inst).unwrap());
    }
}

#[test]
fn seeded_instances_match_enumeration() {
    for seed in 0..200 {
        let inst = random_instance(seed, 8, 3, 3);
        let sol = solve_exact(&inst).unwrap();
        let (assignment, value) = brute_force(&inst);
        assert_eq!((sol.objective, &sol.assignment), (value, &assignment), "seed {seed}");
    }
}

#[test]
fn tight_budget_reports_incumbent() {
    let inst = random_instance(11, 10, 3, 3);
    match ExactSolver::new(1, TieRule::LowestIndex).solve(&inst) {
        Err(Error::SearchBudgetExceeded { best, .. }) => {
            assert!(!best.optimal);
            assert!(check_feasible(&best.assignment, &inst).unwrap());
        }
        Ok(sol) => assert!(sol.optimal),
        Err(other) => panic!("unexpected {other:?}"),
    }
}
