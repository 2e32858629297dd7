use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::AuctionResult;
use crate::model::{AuctionLedger, Buyer, Money, ResourceVector, RoundOutcome, Seller};

/// A bid-matrix fixture: rows are buyers, columns are rounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayFixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub budgets: Vec<Money>,
    pub items_per_round: usize,
    pub bids: Vec<Vec<Money>>,
}

impl ReplayFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn replay(&self) -> Result<AuctionResult> {
        replay(&self.bids, &self.budgets, self.items_per_round)
    }
}

/// Deterministic unit-demand replay against one seller holding
/// `items_per_round` items. Each round, bids are clamped to the remaining
/// budget, the top `items_per_round` positive bids win (ties to the lower
/// buyer index) and winners pay their bids.
pub fn replay(bid_matrix: &[Vec<Money>], budgets: &[Money], items_per_round: usize) -> Result<AuctionResult> {
    if bid_matrix.len() != budgets.len() {
        return Err(Error::validation(
            "bids",
            format!("has {} rows for {} budgets", bid_matrix.len(), budgets.len()),
        ));
    }
    let horizon = bid_matrix.first().map_or(0, Vec::len);
    for (i, row) in bid_matrix.iter().enumerate() {
        if row.len() != horizon {
            return Err(Error::validation(
                format!("bids[{i}]"),
                format!("has {} rounds, row 0 has {horizon}", row.len()),
            ));
        }
        if let Some(l) = row.iter().position(|a| *a < Money::ZERO) {
            return Err(Error::validation(format!("bids[{i}][{l}]"), "must be non-negative"));
        }
    }
    let buyers: Vec<Buyer> = budgets
        .iter()
        .enumerate()
        .map(|(id, &initial_budget)| Buyer { id, initial_budget })
        .collect();
    let seller = Seller::new(0, ResourceVector::from_units(&[items_per_round as i64]));
    let mut ledger = AuctionLedger::new(&buyers, std::slice::from_ref(&seller))?;

    for l in 0..horizon {
        let mut offers: Vec<(usize, Money)> = bid_matrix
            .iter()
            .enumerate()
            .map(|(i, row)| (i, row[l].min(ledger.remaining_budget(i))))
            .filter(|(_, amount)| *amount > Money::ZERO)
            .collect();
        offers.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        offers.truncate(items_per_round);

        let mut outcome = RoundOutcome::empty(l as u32 + 1);
        for (buyer, amount) in offers {
            outcome.winners.insert(buyer, 0);
            outcome.bids.insert(buyer, amount);
            outcome.payments.insert(buyer, amount);
            outcome.demands.insert(buyer, ResourceVector::from_units(&[1]));
            outcome.utility += amount;
        }
        ledger.charge(outcome)?;
    }
    Ok(AuctionResult::from_ledger(ledger))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(values: &[i64]) -> Vec<Money> {
        values.iter().map(|&v| Money::from_units(v)).collect()
    }

    #[test]
    fn budget_clamp_zeroes_second_bid() {
        let result = replay(&[units(&[1, 1])], &units(&[1]), 1).unwrap();
        assert_eq!(result.round_utilities(), units(&[1, 0]));
        assert_eq!(result.total_utility, Money::from_units(1));
    }

    #[test]
    fn ragged_matrix_rejected() {
        let err = replay(&[units(&[1, 1]), units(&[1])], &units(&[5, 5]), 1).unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "bids[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_count_must_match_budgets() {
        assert!(replay(&[units(&[1])], &units(&[5, 5]), 1).is_err());
    }

    #[test]
    fn empty_matrix() {
        let result = replay(&[], &[], 2).unwrap();
        assert!(result.per_round.is_empty());
        assert_eq!(result.total_utility, Money::ZERO);
    }
}
