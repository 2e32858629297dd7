//! Experiment input: who bids, who sells, for how long, and which mechanism
//! settings apply. Also the JSON scenario file schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AuctionLedger, Bid, Buyer, BuyerId, Money, ResourceVector, Seller, DEFAULT_DIMS};
use crate::simlab::{generate_scenario, GeneratorParams};

/// Which prior winners have their bids scaled down.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustScope {
    #[default]
    WinnersOnly,
    AllBuyers,
}

/// Canonical order used to break ties between equal-objective allocations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    #[default]
    LowestIndex,
    HighestIndex,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pricing {
    /// Winners pay their (effective) bid.
    #[default]
    FirstPrice,
    /// Winners pay the externality they impose on the others (Clarke pivot),
    /// i.e. the lowest bid that would still have won.
    Critical,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Exact,
    Greedy,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "greedy" => Ok(SolverKind::Greedy),
            other => Err(Error::validation("solver", format!("`{other}` is not exact or greedy"))),
        }
    }
}

pub const DEFAULT_NODE_BUDGET: u64 = 50_000_000;

fn default_gamma() -> f64 {
    1.0
}

fn default_node_budget() -> u64 {
    DEFAULT_NODE_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    /// Exponent of the remaining-budget ratio applied to adjusted bids.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub scope: AdjustScope,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default)]
    pub pricing: Pricing,
    #[serde(default)]
    pub solver: SolverKind,
    /// Node limit for the exact winner-determination search.
    #[serde(default = "default_node_budget")]
    pub node_budget: u64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            gamma: default_gamma(),
            scope: AdjustScope::default(),
            tie_rule: TieRule::default(),
            pricing: Pricing::default(),
            solver: SolverKind::default(),
            node_budget: default_node_budget(),
        }
    }
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::validation(
                "mechanism.gamma",
                format!("must be finite and >= 0, got {}", self.gamma),
            ));
        }
        Ok(())
    }
}

/// A buyer's true bid for one round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidEntry {
    pub amount: Money,
    pub demand: ResourceVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub dims: usize,
    pub buyers: Vec<Buyer>,
    pub sellers: Vec<Seller>,
    pub horizon: u32,
    /// `bids[buyer][round - 1]`.
    pub bids: Vec<Vec<BidEntry>>,
    pub mechanism: MechanismConfig,
    /// Generator seed the scenario was drawn from, if any.
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn n_buyers(&self) -> usize {
        self.buyers.len()
    }

    /// True bids of every buyer for a 1-based round.
    pub fn round_bids(&self, round: u32) -> Vec<Bid> {
        let idx = (round - 1) as usize;
        self.bids
            .iter()
            .enumerate()
            .map(|(buyer, row)| Bid {
                buyer,
                round,
                amount: row[idx].amount,
                demand: row[idx].demand.clone(),
            })
            .collect()
    }

    pub fn new_ledger(&self) -> Result<AuctionLedger> {
        self.validate()?;
        AuctionLedger::new(&self.buyers, &self.sellers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::validation("horizon", "must be at least 1"));
        }
        self.mechanism.validate()?;
        for (i, buyer) in self.buyers.iter().enumerate() {
            if buyer.id != i {
                return Err(Error::validation(
                    format!("buyers[{i}].id"),
                    format!("ids must be dense and 0-based; expected {i}, found {}", buyer.id),
                ));
            }
            if buyer.initial_budget < Money::ZERO {
                return Err(Error::validation(format!("buyers[{i}].budget"), "must be non-negative"));
            }
        }
        for (j, seller) in self.sellers.iter().enumerate() {
            if seller.id != j {
                return Err(Error::validation(
                    format!("sellers[{j}].id"),
                    format!("ids must be dense and 0-based; expected {j}, found {}", seller.id),
                ));
            }
            for (name, v) in [
                ("round_capacity", &seller.round_capacity),
                ("period_capacity", &seller.period_capacity),
            ] {
                if v.dims() != self.dims {
                    return Err(Error::validation(
                        format!("sellers[{j}].{name}"),
                        format!("has {} dimensions, scenario has {}", v.dims(), self.dims),
                    ));
                }
                if !v.is_non_negative() {
                    return Err(Error::validation(
                        format!("sellers[{j}].{name}"),
                        "components must be non-negative",
                    ));
                }
            }
            if seller.ask.is_some_and(|a| a < Money::ZERO) {
                return Err(Error::validation(format!("sellers[{j}].ask"), "must be non-negative"));
            }
        }
        if self.bids.len() != self.buyers.len() {
            return Err(Error::validation(
                "bids",
                format!("has {} rows for {} buyers", self.bids.len(), self.buyers.len()),
            ));
        }
        for (i, row) in self.bids.iter().enumerate() {
            if row.len() != self.horizon as usize {
                return Err(Error::validation(
                    format!("bids[{i}]"),
                    format!("covers {} rounds, horizon is {}", row.len(), self.horizon),
                ));
            }
            for (l, entry) in row.iter().enumerate() {
                if entry.amount < Money::ZERO {
                    return Err(Error::validation(
                        format!("bids[{i}][{l}].amount"),
                        "must be non-negative",
                    ));
                }
                if entry.demand.dims() != self.dims {
                    return Err(Error::validation(
                        format!("bids[{i}][{l}].demand"),
                        format!("has {} dimensions, scenario has {}", entry.demand.dims(), self.dims),
                    ));
                }
                if !entry.demand.is_non_negative() {
                    return Err(Error::validation(
                        format!("bids[{i}][{l}].demand"),
                        "components must be non-negative",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Parses a scenario file. A `generator` block is expanded with
    /// `seed_override` taking precedence over the block's own seed.
    pub fn from_json(text: &str, seed_override: Option<u64>) -> Result<Scenario> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.into_scenario(seed_override)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScenarioFile::from(self))?)
    }

    /// Initial budgets of all buyers, in id order.
    pub fn budgets(&self) -> Vec<Money> {
        self.buyers.iter().map(|b| b.initial_budget).collect()
    }

    pub fn buyer_ids(&self) -> impl Iterator<Item = BuyerId> {
        0..self.buyers.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerRecord {
    pub id: usize,
    pub budget: Money,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerRecord {
    pub id: usize,
    pub round_capacity: ResourceVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_capacity: Option<ResourceVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask: Option<Money>,
}

/// On-disk scenario schema. Exactly one of `bids` and `generator` is present.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buyers: Vec<BuyerRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sellers: Vec<SellerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bids: Option<Vec<Vec<BidEntry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorParams>,
    #[serde(default)]
    pub mechanism: MechanismConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioFile {
    pub fn into_scenario(self, seed_override: Option<u64>) -> Result<Scenario> {
        match (self.bids, self.generator) {
            (Some(_), Some(_)) => Err(Error::validation(
                "generator",
                "`bids` and `generator` are mutually exclusive",
            )),
            (None, None) => Err(Error::validation("bids", "either `bids` or `generator` is required")),
            (None, Some(mut params)) => {
                for (present, field) in [
                    (!self.buyers.is_empty(), "buyers"),
                    (!self.sellers.is_empty(), "sellers"),
                    (self.horizon.is_some(), "horizon"),
                    (self.dims.is_some(), "dims"),
                ] {
                    if present {
                        return Err(Error::validation(field, "must be omitted when `generator` is present"));
                    }
                }
                if let Some(seed) = seed_override.or(self.seed) {
                    params.seed = seed;
                }
                let mut scenario = generate_scenario(&params)?;
                scenario.mechanism = self.mechanism;
                scenario.validate()?;
                Ok(scenario)
            }
            (Some(bids), None) => {
                let horizon = self
                    .horizon
                    .ok_or_else(|| Error::validation("horizon", "required with explicit `bids`"))?;
                let dims = self
                    .dims
                    .or_else(|| self.sellers.first().map(|s| s.round_capacity.dims()))
                    .or_else(|| bids.iter().flatten().next().map(|b| b.demand.dims()))
                    .unwrap_or(DEFAULT_DIMS);
                let buyers = self
                    .buyers
                    .into_iter()
                    .map(|b| Buyer {
                        id: b.id,
                        initial_budget: b.budget,
                    })
                    .collect();
                let sellers = self
                    .sellers
                    .into_iter()
                    .map(|s| Seller {
                        id: s.id,
                        period_capacity: s
                            .period_capacity
                            .unwrap_or_else(|| ResourceVector::unbounded(s.round_capacity.dims())),
                        round_capacity: s.round_capacity,
                        ask: s.ask,
                    })
                    .collect();
                let scenario = Scenario {
                    dims,
                    buyers,
                    sellers,
                    horizon,
                    bids,
                    mechanism: self.mechanism,
                    seed: seed_override.or(self.seed),
                };
                scenario.validate()?;
                Ok(scenario)
            }
        }
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            dims: Some(s.dims),
            buyers: s
                .buyers
                .iter()
                .map(|b| BuyerRecord {
                    id: b.id,
                    budget: b.initial_budget,
                })
                .collect(),
            sellers: s
                .sellers
                .iter()
                .map(|seller| SellerRecord {
                    id: seller.id,
                    round_capacity: seller.round_capacity.clone(),
                    period_capacity: (!seller.period_capacity.is_unbounded()).then(|| seller.period_capacity.clone()),
                    ask: seller.ask,
                })
                .collect(),
            horizon: Some(s.horizon),
            bids: Some(s.bids.clone()),
            generator: None,
            mechanism: s.mechanism.clone(),
            seed: s.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = include_str!("../fixtures/table1_scenario.json");

    #[test]
    fn parses_table1_scenario() {
        let s = Scenario::from_json(TABLE1, None).unwrap();
        assert_eq!(s.dims, 1);
        assert_eq!(s.horizon, 6);
        assert_eq!(
            s.budgets(),
            vec![Money::from_units(15), Money::from_units(9), Money::from_units(10)]
        );
        assert!(s.sellers[0].period_capacity.is_unbounded());
        let ledger = s.new_ledger().unwrap();
        assert_eq!(ledger.remaining_budgets(), &s.budgets()[..]);
    }

    #[test]
    fn json_round_trip_is_stable() {
        let s = Scenario::from_json(TABLE1, None).unwrap();
        let text = s.to_json().unwrap();
        let back = Scenario::from_json(&text, None).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn both_bid_sources_rejected() {
        let text = r#"{"horizon":1,"bids":[],"generator":{}}"#;
        match Scenario::from_json(text, None) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "generator"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_bid_source_rejected() {
        assert!(matches!(
            Scenario::from_json(r#"{"horizon":1}"#, None),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn ragged_bids_name_the_row() {
        let text = r#"{
            "buyers":[{"id":0,"budget":5}],
            "sellers":[{"id":0,"round_capacity":[1]}],
            "horizon":2,
            "bids":[[{"amount":1,"demand":[1]}]]
        }"#;
        match Scenario::from_json(text, None) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "bids[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_names_the_field() {
        let text = r#"{
            "buyers":[{"id":0,"budget":5}],
            "sellers":[{"id":0,"round_capacity":[1,1]}],
            "horizon":1,
            "bids":[[{"amount":1,"demand":[1]}]]
        }"#;
        match Scenario::from_json(text, None) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "bids[0][0].demand"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_capacity_rejected() {
        let text = r#"{
            "sellers":[{"id":0,"round_capacity":[1],"period_capacity":[-1]}],
            "horizon":1,
            "bids":[]
        }"#;
        match Scenario::from_json(text, None) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "sellers[0].period_capacity"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_market_is_valid() {
        let s = Scenario::from_json(r#"{"horizon":3,"bids":[]}"#, None).unwrap();
        assert_eq!(s.dims, DEFAULT_DIMS);
        assert_eq!(s.new_ledger().unwrap().n_buyers(), 0);
    }

    #[test]
    fn negative_gamma_rejected() {
        let text = r#"{"horizon":1,"bids":[],"mechanism":{"gamma":-0.5}}"#;
        match Scenario::from_json(text, None) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "mechanism.gamma"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generator_seed_override_wins() {
        let text = r#"{"generator":{"n_buyers":2,"m_sellers":1,"horizon":2,"seed":1}}"#;
        let s = Scenario::from_json(text, Some(7)).unwrap();
        assert_eq!(s.seed, Some(7));
        let plain = Scenario::from_json(text, None).unwrap();
        assert_eq!(plain.seed, Some(1));
    }
}
