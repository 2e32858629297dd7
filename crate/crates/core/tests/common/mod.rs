//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mdc_auction::{Assignment, Bid, Money, ResourceVector, WdpInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive winner determination. Every buyer picks a seller or nothing;
/// choices are enumerated as an odometer with buyer 0 most significant and
/// sellers before "nothing", and the first strictly best assignment is kept.
/// That is the same tie order the branch-and-bound search uses.
pub fn brute_force(inst: &WdpInstance) -> (Assignment, Money) {
    let bids: Vec<&Bid> = inst.bids.iter().filter(|b| b.amount > Money::ZERO).collect();
    let sellers: Vec<usize> = inst.seller_caps.keys().copied().collect();
    let none = sellers.len();
    let mut digits = vec![0usize; bids.len()];
    let mut best: Option<(Vec<usize>, Money)> = None;
    loop {
        let mut used: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
        let mut ok = true;
        let mut value = Money::ZERO;
        for (i, &d) in digits.iter().enumerate() {
            if d == none {
                continue;
            }
            let s = sellers[d];
            let cap = &inst.seller_caps[&s];
            let acc = used.entry(s).or_insert_with(|| vec![0; cap.dims()]);
            for (k, q) in bids[i].demand.millis().iter().enumerate() {
                acc[k] += q;
                if acc[k] > cap.millis()[k] {
                    ok = false;
                }
            }
            value += bids[i].amount;
        }
        if ok && best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((digits.clone(), value));
        }
        // odometer step, last buyer least significant
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                let (choice, value) = best.expect("empty assignment is always feasible");
                let assignment = choice
                    .iter()
                    .enumerate()
                    .filter(|(_, &d)| d != none)
                    .map(|(i, &d)| (bids[i].buyer, sellers[d]))
                    .collect();
                return (assignment, value);
            }
            pos -= 1;
            if digits[pos] < none {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Random instance with up to `max_buyers` buyers, `max_sellers` sellers and
/// `max_dims` dimensions. Amounts may be zero; demands and capacities are
/// whole units so that ties are common.
pub fn random_instance(seed: u64, max_buyers: usize, max_sellers: usize, max_dims: usize) -> WdpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=max_buyers);
    let m = rng.gen_range(1..=max_sellers);
    let d = rng.gen_range(1..=max_dims);
    let bids = (0..n)
        .map(|buyer| Bid {
            buyer,
            round: 1,
            amount: Money::from_units(rng.gen_range(0..=12)),
            demand: ResourceVector::from_units(&(0..d).map(|_| rng.gen_range(0..=5)).collect::<Vec<_>>()),
        })
        .collect();
    let caps = (0..m)
        .map(|j| {
            (
                j,
                ResourceVector::from_units(&(0..d).map(|_| rng.gen_range(0..=10)).collect::<Vec<_>>()),
            )
        })
        .collect();
    WdpInstance::new(bids, caps).expect("generated instance is valid")
}

pub fn table1_bids() -> Vec<Vec<Money>> {
    units(&[[3, 4, 3, 2, 1, 1], [4, 5, 0, 0, 0, 0], [5, 5, 0, 0, 0, 0]])
}

pub fn table2_bids() -> Vec<Vec<Money>> {
    units(&[[3, 5, 4, 3, 2, 1], [4, 2, 1, 2, 1, 1], [5, 2, 3, 2, 2, 0]])
}

pub fn table_budgets() -> Vec<Money> {
    [15, 9, 10].into_iter().map(Money::from_units).collect()
}

fn units(rows: &[[i64; 6]]) -> Vec<Vec<Money>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| Money::from_units(v)).collect())
        .collect()
}

pub fn money_units(values: &[i64]) -> Vec<Money> {
    values.iter().map(|&v| Money::from_units(v)).collect()
}
