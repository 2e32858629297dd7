//! Greedy bid/ask matching baseline. Buyers in descending bid order take
//! the cheapest seller that still has room, as long as the bid covers the
//! ask; the trade clears at the midpoint of bid and ask.

use crate::error::{Error, Result};
use crate::mechanisms::AuctionResult;
use crate::model::{Money, ResourceVector, RoundOutcome, MILLIS_PER_UNIT};
use crate::scenario::Scenario;

/// Ask for a task: the per-unit ask times the task's mean demand per
/// dimension, rounded up to a milli-unit.
pub fn ask_price(ask: Money, demand: &ResourceVector) -> Money {
    let dims = demand.dims().max(1) as i128;
    let total: i128 = demand.millis().iter().map(|&q| q as i128).sum();
    let size_den = dims * MILLIS_PER_UNIT as i128;
    let size_num = if demand.dims() == 0 { size_den } else { total };
    let price = (ask.millis() as i128 * size_num + size_den - 1).div_euclid(size_den);
    Money::from_millis(price.min(i64::MAX as i128) as i64)
}

pub fn run_double_auction(scenario: &Scenario) -> Result<AuctionResult> {
    let mut ledger = scenario.new_ledger()?;
    let mut asks = Vec::with_capacity(scenario.sellers.len());
    for (j, seller) in scenario.sellers.iter().enumerate() {
        let ask = seller
            .ask
            .ok_or_else(|| Error::validation(format!("sellers[{j}].ask"), "double auction needs an ask price"))?;
        asks.push(ask);
    }
    let mut seller_order: Vec<usize> = (0..scenario.sellers.len()).collect();
    seller_order.sort_by(|&a, &b| asks[a].cmp(&asks[b]).then(a.cmp(&b)));

    for round in 1..=scenario.horizon {
        let mut bids = scenario.round_bids(round);
        for bid in &mut bids {
            bid.amount = bid.amount.min(ledger.remaining_budget(bid.buyer));
        }
        bids.retain(|b| b.amount > Money::ZERO);
        bids.sort_by(|a, b| b.amount.cmp(&a.amount).then(a.buyer.cmp(&b.buyer)));

        let mut residual: Vec<ResourceVector> = scenario.sellers.iter().map(|s| ledger.effective_capacity(s)).collect();
        let mut outcome = RoundOutcome::empty(round);
        for bid in bids {
            for &j in &seller_order {
                let price = ask_price(asks[j], &bid.demand);
                if bid.amount < price {
                    // asks only grow along seller_order
                    break;
                }
                if !bid.demand.fits_within(&residual[j]) {
                    continue;
                }
                residual[j] = residual[j].saturating_sub(&bid.demand);
                outcome.winners.insert(bid.buyer, j);
                outcome.bids.insert(bid.buyer, bid.amount);
                outcome.payments.insert(bid.buyer, bid.amount.midpoint(price));
                outcome.demands.insert(bid.buyer, bid.demand.clone());
                outcome.utility += bid.amount;
                break;
            }
        }
        ledger.charge(outcome)?;
    }
    Ok(AuctionResult::from_ledger(ledger))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Buyer, Seller};
    use crate::scenario::{BidEntry, MechanismConfig};

    fn market(bids: &[i64], asks: &[i64]) -> Scenario {
        Scenario {
            dims: 1,
            buyers: (0..bids.len())
                .map(|id| Buyer {
                    id,
                    initial_budget: Money::from_units(100),
                })
                .collect(),
            sellers: asks
                .iter()
                .enumerate()
                .map(|(id, &a)| Seller {
                    ask: Some(Money::from_units(a)),
                    ..Seller::new(id, ResourceVector::from_units(&[1]))
                })
                .collect(),
            horizon: 1,
            bids: bids
                .iter()
                .map(|&b| {
                    vec![BidEntry {
                        amount: Money::from_units(b),
                        demand: ResourceVector::from_units(&[1]),
                    }]
                })
                .collect(),
            mechanism: MechanismConfig::default(),
            seed: None,
        }
    }

    #[test]
    fn one_trade_at_midpoint() {
        let result = run_double_auction(&market(&[5, 3], &[2, 4])).unwrap();
        let round = &result.per_round[0];
        assert_eq!(round.winner_ids(), vec![0]);
        assert_eq!(round.winners.seller_of(0), Some(0));
        assert_eq!(round.payments[&0], Money::from_millis(3500));
        assert_eq!(result.total_revenue, Money::from_millis(3500));
        assert_eq!(result.total_utility, Money::from_units(5));
    }

    #[test]
    fn no_trade_when_asks_exceed_bids() {
        let result = run_double_auction(&market(&[2, 3], &[4, 5])).unwrap();
        assert!(result.per_round[0].winners.is_empty());
        assert_eq!(result.total_revenue, Money::ZERO);
    }

    #[test]
    fn equal_bid_and_ask_trade_at_that_price() {
        let result = run_double_auction(&market(&[4], &[4])).unwrap();
        assert_eq!(result.per_round[0].payments[&0], Money::from_units(4));
    }

    #[test]
    fn missing_ask_is_validation_error() {
        let mut s = market(&[4], &[4]);
        s.sellers[0].ask = None;
        match run_double_auction(&s) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "sellers[0].ask"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ask_price_scales_with_mean_demand() {
        let ask = Money::from_units(2);
        assert_eq!(ask_price(ask, &ResourceVector::from_units(&[1])), Money::from_units(2));
        assert_eq!(
            ask_price(ask, &ResourceVector::from_units(&[1, 2, 3])),
            Money::from_units(4)
        );
        assert_eq!(
            ask_price(ask, &ResourceVector::from_units(&[1, 0, 0])),
            Money::from_millis(667)
        );
    }
}
