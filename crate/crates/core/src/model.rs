//! Domain types shared by every mechanism: fixed-point money and resource
//! quantities, bids, assignments, round outcomes and the cross-round ledger.

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type BuyerId = usize;
pub type SellerId = usize;

/// Fixed-point scale shared by [`Money`] and [`ResourceVector`] components.
pub const MILLIS_PER_UNIT: i64 = 1000;

/// Default number of resource dimensions (CPU, memory, battery).
pub const DEFAULT_DIMS: usize = 3;

fn millis_from_decimal(value: f64) -> Option<i64> {
    if !value.is_finite() {
        return None;
    }
    let scaled = (value * MILLIS_PER_UNIT as f64).round();
    if scaled.abs() >= i64::MAX as f64 {
        return None;
    }
    Some(scaled as i64)
}

fn fmt_millis(millis: i64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let sign = if millis < 0 { "-" } else { "" };
    let abs = millis.unsigned_abs();
    let whole = abs / MILLIS_PER_UNIT as u64;
    let frac = abs % MILLIS_PER_UNIT as u64;
    if frac == 0 {
        write!(f, "{sign}{whole}")
    } else {
        let digits = format!("{frac:03}");
        write!(f, "{sign}{whole}.{}", digits.trim_end_matches('0'))
    }
}

/// Currency amount in thousandths of a unit.
///
/// Integer arithmetic keeps budget conservation exact across any number of
/// rounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_millis(millis: i64) -> Self {
        Money(millis)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * MILLIS_PER_UNIT)
    }

    /// Rounds to the nearest milli-unit; `None` for NaN or out of range.
    pub fn from_decimal(value: f64) -> Option<Self> {
        millis_from_decimal(value).map(Money)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MILLIS_PER_UNIT as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Midpoint rounded down to the nearest milli-unit.
    pub fn midpoint(self, other: Money) -> Money {
        Money((self.0 + other.0).div_euclid(2))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_millis(self.0, f)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0 % MILLIS_PER_UNIT == 0 {
            serializer.serialize_i64(self.0 / MILLIS_PER_UNIT)
        } else {
            serializer.serialize_f64(self.to_f64())
        }
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = f64::deserialize(deserializer)?;
        Money::from_decimal(value)
            .ok_or_else(|| serde::de::Error::custom(format!("amount {value} is not representable")))
    }
}

/// Per-dimension resource quantities in thousandths of a unit.
///
/// [`ResourceVector::UNBOUNDED`] marks a component without a limit; sums
/// saturate at it instead of overflowing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ResourceVector(Vec<i64>);

impl ResourceVector {
    pub const UNBOUNDED: i64 = i64::MAX;

    pub fn from_millis(components: Vec<i64>) -> Self {
        ResourceVector(components)
    }

    pub fn from_units(components: &[i64]) -> Self {
        ResourceVector(components.iter().map(|c| c * MILLIS_PER_UNIT).collect())
    }

    pub fn zeros(dims: usize) -> Self {
        ResourceVector(vec![0; dims])
    }

    pub fn unbounded(dims: usize) -> Self {
        ResourceVector(vec![Self::UNBOUNDED; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn millis(&self) -> &[i64] {
        &self.0
    }

    pub fn is_non_negative(&self) -> bool {
        self.0.iter().all(|&c| c >= 0)
    }

    pub fn is_unbounded(&self) -> bool {
        self.0.iter().all(|&c| c == Self::UNBOUNDED)
    }

    /// Component-wise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn component_min(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| *a.min(b)).collect())
    }

    pub fn saturating_add(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| a.saturating_add(*b)).collect())
    }

    /// Subtracts `other`, leaving unbounded components unbounded.
    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| if *a == Self::UNBOUNDED { *a } else { a - b })
                .collect(),
        )
    }

    pub fn scaled(&self, factor: i64) -> ResourceVector {
        ResourceVector(self.0.iter().map(|c| c.saturating_mul(factor)).collect())
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if *c == Self::UNBOUNDED {
                write!(f, "inf")?;
            } else {
                fmt_millis(*c, f)?;
            }
        }
        write!(f, ")")
    }
}

impl Serialize for ResourceVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for &c in &self.0 {
            if c % MILLIS_PER_UNIT == 0 {
                seq.serialize_element(&(c / MILLIS_PER_UNIT))?;
            } else {
                seq.serialize_element(&(c as f64 / MILLIS_PER_UNIT as f64))?;
            }
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ResourceVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        raw.into_iter()
            .map(|v| {
                millis_from_decimal(v)
                    .ok_or_else(|| serde::de::Error::custom(format!("quantity {v} is not representable")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ResourceVector)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buyer {
    pub id: BuyerId,
    pub initial_budget: Money,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seller {
    pub id: SellerId,
    pub round_capacity: ResourceVector,
    /// Total shareable over the whole horizon.
    pub period_capacity: ResourceVector,
    /// Ask price per unit of normalized demand; only the double auction uses it.
    pub ask: Option<Money>,
}

impl Seller {
    pub fn new(id: SellerId, round_capacity: ResourceVector) -> Self {
        let dims = round_capacity.dims();
        Seller {
            id,
            round_capacity,
            period_capacity: ResourceVector::unbounded(dims),
            ask: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bid {
    pub buyer: BuyerId,
    /// 1-based round index.
    pub round: u32,
    pub amount: Money,
    pub demand: ResourceVector,
}

/// Buyer to seller allocation for one round. A map key can only occur once,
/// so every buyer is served by at most one seller.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment(BTreeMap<BuyerId, SellerId>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, buyer: BuyerId, seller: SellerId) -> Option<SellerId> {
        self.0.insert(buyer, seller)
    }

    pub fn seller_of(&self, buyer: BuyerId) -> Option<SellerId> {
        self.0.get(&buyer).copied()
    }

    pub fn contains(&self, buyer: BuyerId) -> bool {
        self.0.contains_key(&buyer)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BuyerId, SellerId)> + '_ {
        self.0.iter().map(|(b, s)| (*b, *s))
    }

    pub fn buyers(&self) -> impl Iterator<Item = BuyerId> + '_ {
        self.0.keys().copied()
    }
}

impl FromIterator<(BuyerId, SellerId)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (BuyerId, SellerId)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// Everything one round decided.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundOutcome {
    pub round: u32,
    pub winners: Assignment,
    /// Winning (effective) bid amounts.
    pub bids: BTreeMap<BuyerId, Money>,
    pub payments: BTreeMap<BuyerId, Money>,
    /// Demand served for each winner, charged against its seller's period capacity.
    pub demands: BTreeMap<BuyerId, ResourceVector>,
    /// Sum of winning bid amounts.
    pub utility: Money,
}

impl RoundOutcome {
    pub fn empty(round: u32) -> Self {
        RoundOutcome {
            round,
            ..Default::default()
        }
    }

    pub fn revenue(&self) -> Money {
        self.payments.values().sum()
    }

    pub fn winner_ids(&self) -> Vec<BuyerId> {
        self.winners.buyers().collect()
    }

    /// Checks the outcome's internal consistency.
    pub fn check(&self) -> Result<()> {
        let recomputed: Money = self.bids.values().sum();
        if recomputed != self.utility {
            return Err(Error::Invariant(format!(
                "round {}: utility {} differs from winning bids sum {}",
                self.round, self.utility, recomputed
            )));
        }
        for buyer in self.payments.keys().chain(self.bids.keys()) {
            if !self.winners.contains(*buyer) {
                return Err(Error::Invariant(format!(
                    "round {}: buyer {} charged without winning",
                    self.round, buyer
                )));
            }
        }
        Ok(())
    }
}

/// Cross-round state: what every buyer can still pay and what every seller
/// can still share.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuctionLedger {
    initial_budget: Vec<Money>,
    remaining_budget: Vec<Money>,
    remaining_period_capacity: Vec<ResourceVector>,
    history: Vec<RoundOutcome>,
}

impl AuctionLedger {
    /// Ledger for validated buyers and sellers. Ids must be dense 0-based
    /// indices, which [`crate::scenario::Scenario::validate`] guarantees.
    pub fn new(buyers: &[Buyer], sellers: &[Seller]) -> Result<Self> {
        for (i, buyer) in buyers.iter().enumerate() {
            if buyer.id != i {
                return Err(Error::validation(
                    format!("buyers[{i}].id"),
                    format!("expected dense id {i}, found {}", buyer.id),
                ));
            }
            if buyer.initial_budget < Money::ZERO {
                return Err(Error::validation(format!("buyers[{i}].budget"), "must be non-negative"));
            }
        }
        for (j, seller) in sellers.iter().enumerate() {
            if seller.id != j {
                return Err(Error::validation(
                    format!("sellers[{j}].id"),
                    format!("expected dense id {j}, found {}", seller.id),
                ));
            }
            if !seller.period_capacity.is_non_negative() {
                return Err(Error::validation(
                    format!("sellers[{j}].period_capacity"),
                    "components must be non-negative",
                ));
            }
        }
        let budgets: Vec<Money> = buyers.iter().map(|b| b.initial_budget).collect();
        Ok(AuctionLedger {
            initial_budget: budgets.clone(),
            remaining_budget: budgets,
            remaining_period_capacity: sellers.iter().map(|s| s.period_capacity.clone()).collect(),
            history: Vec::new(),
        })
    }

    pub fn initial_budget(&self, buyer: BuyerId) -> Money {
        self.initial_budget[buyer]
    }

    pub fn remaining_budget(&self, buyer: BuyerId) -> Money {
        self.remaining_budget[buyer]
    }

    pub fn remaining_budgets(&self) -> &[Money] {
        &self.remaining_budget
    }

    pub fn initial_budgets(&self) -> &[Money] {
        &self.initial_budget
    }

    pub fn remaining_period_capacity(&self, seller: SellerId) -> &ResourceVector {
        &self.remaining_period_capacity[seller]
    }

    pub fn history(&self) -> &[RoundOutcome] {
        &self.history
    }

    pub fn n_buyers(&self) -> usize {
        self.remaining_budget.len()
    }

    pub fn n_sellers(&self) -> usize {
        self.remaining_period_capacity.len()
    }

    /// Whether `buyer` won the most recent recorded round.
    pub fn won_last_round(&self, buyer: BuyerId) -> bool {
        self.history
            .last()
            .is_some_and(|outcome| outcome.winners.contains(buyer))
    }

    /// What `seller` can offer this round: its per-round capacity capped by
    /// what is left of its period capacity.
    pub fn effective_capacity(&self, seller: &Seller) -> ResourceVector {
        seller
            .round_capacity
            .component_min(&self.remaining_period_capacity[seller.id])
    }

    /// Applies a round: debits payments and served demand, then records the
    /// outcome. Nothing changes if any check fails.
    pub fn charge(&mut self, outcome: RoundOutcome) -> Result<()> {
        outcome.check()?;
        for (&buyer, &payment) in &outcome.payments {
            let Some(&remaining) = self.remaining_budget.get(buyer) else {
                return Err(Error::Invariant(format!("payment from unknown buyer {buyer}")));
            };
            if payment < Money::ZERO {
                return Err(Error::Invariant(format!(
                    "negative payment {payment} from buyer {buyer}"
                )));
            }
            if payment > remaining {
                return Err(Error::Invariant(format!(
                    "round {}: buyer {buyer} pays {payment} with only {remaining} left",
                    outcome.round
                )));
            }
        }

        let mut load: BTreeMap<SellerId, ResourceVector> = BTreeMap::new();
        for (buyer, seller) in outcome.winners.iter() {
            if seller >= self.remaining_period_capacity.len() {
                return Err(Error::Invariant(format!(
                    "buyer {buyer} served by unknown seller {seller}"
                )));
            }
            if let Some(demand) = outcome.demands.get(&buyer) {
                let dims = self.remaining_period_capacity[seller].dims();
                if demand.dims() != dims {
                    return Err(Error::Invariant(format!(
                        "buyer {buyer} demand has {} dimensions, seller {seller} has {dims}",
                        demand.dims()
                    )));
                }
                let entry = load.entry(seller).or_insert_with(|| ResourceVector::zeros(dims));
                *entry = entry.saturating_add(demand);
            }
        }
        for (&seller, served) in &load {
            if !served.fits_within(&self.remaining_period_capacity[seller]) {
                return Err(Error::Invariant(format!(
                    "round {}: seller {seller} serves {served} beyond remaining period capacity {}",
                    outcome.round, self.remaining_period_capacity[seller]
                )));
            }
        }

        for (&buyer, &payment) in &outcome.payments {
            self.remaining_budget[buyer] -= payment;
        }
        for (seller, served) in load {
            let cap = &mut self.remaining_period_capacity[seller];
            *cap = cap.saturating_sub(&served);
        }
        self.history.push(outcome);
        debug_assert!(self.check_invariants().is_ok());
        Ok(())
    }

    /// Non-negativity and exact budget conservation against the history.
    pub fn check_invariants(&self) -> Result<()> {
        for (buyer, &remaining) in self.remaining_budget.iter().enumerate() {
            if remaining < Money::ZERO {
                return Err(Error::Invariant(format!("buyer {buyer} budget is negative")));
            }
            let paid: Money = self.history.iter().filter_map(|o| o.payments.get(&buyer)).sum();
            if self.initial_budget[buyer] - remaining != paid {
                return Err(Error::Invariant(format!(
                    "buyer {buyer}: spent {} but history records {paid}",
                    self.initial_budget[buyer] - remaining
                )));
            }
        }
        for (seller, cap) in self.remaining_period_capacity.iter().enumerate() {
            if !cap.is_non_negative() {
                return Err(Error::Invariant(format!("seller {seller} period capacity is negative")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buyers(budgets: &[i64]) -> Vec<Buyer> {
        budgets
            .iter()
            .enumerate()
            .map(|(id, &b)| Buyer {
                id,
                initial_budget: Money::from_units(b),
            })
            .collect()
    }

    fn unit_seller(capacity: i64) -> Seller {
        Seller::new(0, ResourceVector::from_units(&[capacity]))
    }

    fn outcome(round: u32, paid: &[(BuyerId, i64)]) -> RoundOutcome {
        let mut o = RoundOutcome::empty(round);
        for &(buyer, amount) in paid {
            o.winners.insert(buyer, 0);
            o.bids.insert(buyer, Money::from_units(amount));
            o.payments.insert(buyer, Money::from_units(amount));
            o.demands.insert(buyer, ResourceVector::from_units(&[1]));
            o.utility += Money::from_units(amount);
        }
        o
    }

    fn remaining_units(ledger: &AuctionLedger) -> Vec<i64> {
        ledger
            .remaining_budgets()
            .iter()
            .map(|m| m.millis() / MILLIS_PER_UNIT)
            .collect()
    }

    #[test]
    fn money_formatting() {
        assert_eq!(Money::from_units(26).to_string(), "26");
        assert_eq!(Money::from_millis(3500).to_string(), "3.5");
        assert_eq!(Money::from_millis(2222).to_string(), "2.222");
        assert_eq!(Money::from_millis(-50).to_string(), "-0.05");
        assert_eq!(Money::from_decimal(2.2225), Some(Money::from_millis(2223)));
        assert_eq!(Money::from_decimal(f64::NAN), None);
    }

    #[test]
    fn money_serde_keeps_integers_integral() {
        let json = serde_json::to_string(&vec![Money::from_units(4), Money::from_millis(3500)]).unwrap();
        assert_eq!(json, "[4,3.5]");
        let back: Vec<Money> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Money::from_units(4), Money::from_millis(3500)]);
    }

    #[test]
    fn new_ledger_copies_budgets() {
        let ledger = AuctionLedger::new(&buyers(&[15, 9, 10]), &[unit_seller(2)]).unwrap();
        assert_eq!(remaining_units(&ledger), vec![15, 9, 10]);
        assert!(ledger.history().is_empty());
    }

    #[test]
    fn empty_ledger_is_valid() {
        let ledger = AuctionLedger::new(&[], &[]).unwrap();
        assert_eq!(ledger.n_buyers(), 0);
        assert_eq!(ledger.n_sellers(), 0);
        ledger.check_invariants().unwrap();
    }

    #[test]
    fn period_capacity_initialized_verbatim() {
        let mut seller = Seller::new(0, ResourceVector::from_units(&[2, 2, 2]));
        seller.period_capacity = ResourceVector::from_units(&[6, 6, 6]);
        let ledger = AuctionLedger::new(&[], &[seller]).unwrap();
        assert_eq!(
            ledger.remaining_period_capacity(0),
            &ResourceVector::from_units(&[6, 6, 6])
        );
    }

    #[test]
    fn negative_budget_rejected_with_field() {
        let mut b = buyers(&[1]);
        b[0].initial_budget = Money::from_units(-1);
        match AuctionLedger::new(&b, &[]) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "buyers[0].budget"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn charge_follows_first_two_table_rounds() {
        let mut ledger = AuctionLedger::new(&buyers(&[15, 9, 10]), &[unit_seller(2)]).unwrap();
        ledger.charge(outcome(1, &[(1, 4), (2, 5)])).unwrap();
        assert_eq!(remaining_units(&ledger), vec![15, 5, 5]);
        ledger.charge(outcome(2, &[(1, 5), (2, 5)])).unwrap();
        assert_eq!(remaining_units(&ledger), vec![15, 0, 0]);
        assert_eq!(ledger.history().len(), 2);
        ledger.check_invariants().unwrap();
    }

    #[test]
    fn empty_charge_only_records_history() {
        let mut ledger = AuctionLedger::new(&buyers(&[15, 9, 10]), &[unit_seller(2)]).unwrap();
        ledger.charge(RoundOutcome::empty(1)).unwrap();
        assert_eq!(remaining_units(&ledger), vec![15, 9, 10]);
        assert_eq!(ledger.history().len(), 1);
    }

    #[test]
    fn overdraft_is_an_invariant_error_and_leaves_ledger_untouched() {
        let mut ledger = AuctionLedger::new(&buyers(&[15, 9, 10]), &[unit_seller(2)]).unwrap();
        let before = ledger.clone();
        let err = ledger.charge(outcome(1, &[(0, 3), (1, 10)])).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)), "{err}");
        assert_eq!(ledger, before);
    }

    #[test]
    fn period_capacity_overrun_rejected() {
        let mut seller = unit_seller(2);
        seller.period_capacity = ResourceVector::from_units(&[1]);
        let mut ledger = AuctionLedger::new(&buyers(&[5, 5]), &[seller]).unwrap();
        let err = ledger.charge(outcome(1, &[(0, 1), (1, 1)])).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
        ledger.charge(outcome(1, &[(0, 1)])).unwrap();
        assert_eq!(ledger.remaining_period_capacity(0), &ResourceVector::zeros(1));
    }

    #[test]
    fn payment_without_win_rejected() {
        let mut ledger = AuctionLedger::new(&buyers(&[5]), &[unit_seller(1)]).unwrap();
        let mut o = RoundOutcome::empty(1);
        o.payments.insert(0, Money::from_units(1));
        assert!(matches!(ledger.charge(o), Err(Error::Invariant(_))));
    }

    #[test]
    fn unbounded_capacity_stays_unbounded() {
        let v = ResourceVector::unbounded(2);
        let after = v.saturating_sub(&ResourceVector::from_units(&[3, 4]));
        assert!(after.is_unbounded());
        assert_eq!(v.to_string(), "(inf,inf)");
    }
}
