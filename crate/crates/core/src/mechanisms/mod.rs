//! Auction mechanisms run over a [`Scenario`]: the single-round auction, the
//! budget-aware multi-round framework built on it, the plain repeated
//! baseline, a double-auction baseline and the table replay engine.

mod double;
mod replay;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use double::{ask_price, run_double_auction};
pub use replay::{replay, ReplayFixture};

use crate::error::{Error, Result};
use crate::model::{AuctionLedger, Bid, Money, RoundOutcome, Seller};
use crate::scenario::{AdjustScope, MechanismConfig, Pricing, Scenario};
use crate::wdp::{self, WdpInstance};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjustmentPolicy {
    pub gamma: f64,
    pub scope: AdjustScope,
}

impl AdjustmentPolicy {
    pub fn new(gamma: f64, scope: AdjustScope) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::validation(
                "gamma",
                format!("must be finite and >= 0, got {gamma}"),
            ));
        }
        Ok(AdjustmentPolicy { gamma, scope })
    }
}

impl From<&MechanismConfig> for AdjustmentPolicy {
    fn from(cfg: &MechanismConfig) -> Self {
        AdjustmentPolicy {
            gamma: cfg.gamma,
            scope: cfg.scope,
        }
    }
}

/// `amount * (remaining / initial)^gamma`, rounded down to a milli-unit.
fn scale_by_budget_ratio(amount: Money, remaining: Money, initial: Money, gamma: f64) -> Money {
    let (a, r, i) = (
        amount.millis() as i128,
        remaining.millis() as i128,
        initial.millis() as i128,
    );
    if gamma.fract() == 0.0 && gamma <= 16.0 {
        // exact rational path for integer exponents
        let exp = gamma as u32;
        if let (Some(num), Some(den)) = (r.checked_pow(exp), i.checked_pow(exp)) {
            if let Some(prod) = a.checked_mul(num) {
                return Money::from_millis((prod / den) as i64);
            }
        }
    }
    let ratio = remaining.millis() as f64 / initial.millis() as f64;
    let scaled = amount.millis() as f64 * ratio.powf(gamma);
    Money::from_millis((scaled + 1e-9).floor() as i64)
}

/// A buyer's effective bid for the next round.
///
/// The true amount is clamped to the remaining budget, scaled by the
/// remaining-budget ratio raised to `gamma` (only for last round's winners
/// under [`AdjustScope::WinnersOnly`]), and clamped again. A buyer with no
/// initial budget can never pay and bids zero.
pub fn adjust_bid(
    true_amount: Money,
    remaining: Money,
    initial: Money,
    policy: &AdjustmentPolicy,
    won_previous: bool,
) -> Money {
    if initial <= Money::ZERO || remaining <= Money::ZERO {
        return Money::ZERO;
    }
    let clamped = true_amount.min(remaining).max(Money::ZERO);
    let punished = match policy.scope {
        AdjustScope::WinnersOnly => won_previous,
        AdjustScope::AllBuyers => true,
    };
    if !punished || policy.gamma == 0.0 || remaining >= initial {
        return clamped;
    }
    scale_by_budget_ratio(clamped, remaining, initial, policy.gamma).min(remaining)
}

/// Output of a multi-round run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuctionResult {
    pub per_round: Vec<RoundOutcome>,
    pub total_utility: Money,
    pub total_revenue: Money,
    /// Ledger state after the last round.
    pub ledger: AuctionLedger,
}

impl AuctionResult {
    pub fn from_ledger(ledger: AuctionLedger) -> Self {
        let per_round = ledger.history().to_vec();
        AuctionResult {
            total_utility: per_round.iter().map(|o| o.utility).sum(),
            total_revenue: per_round.iter().map(RoundOutcome::revenue).sum(),
            per_round,
            ledger,
        }
    }

    pub fn round_utilities(&self) -> Vec<Money> {
        self.per_round.iter().map(|o| o.utility).collect()
    }
}

fn check_round_bids(bids: &[Bid], sellers: &[Seller], ledger: &AuctionLedger) -> Result<()> {
    let dims = sellers.first().map(|s| s.round_capacity.dims());
    for (k, bid) in bids.iter().enumerate() {
        if bid.buyer >= ledger.n_buyers() {
            return Err(Error::validation(
                format!("bids[{k}].buyer"),
                format!("unknown buyer {}", bid.buyer),
            ));
        }
        if let Some(dims) = dims {
            if bid.demand.dims() != dims {
                return Err(Error::validation(
                    format!("bids[{k}].demand"),
                    format!("has {} dimensions, sellers have {dims}", bid.demand.dims()),
                ));
            }
        }
        if bid.amount > ledger.remaining_budget(bid.buyer) {
            return Err(Error::validation(
                format!("bids[{k}].amount"),
                format!(
                    "{} exceeds buyer {} remaining budget {}",
                    bid.amount,
                    bid.buyer,
                    ledger.remaining_budget(bid.buyer)
                ),
            ));
        }
    }
    if let Some(dims) = dims {
        if let Some(j) = sellers.iter().position(|s| s.round_capacity.dims() != dims) {
            return Err(Error::validation(
                format!("sellers[{j}].round_capacity"),
                "dimension differs from other sellers",
            ));
        }
    }
    Ok(())
}

/// One single-round auction. Winners come from winner determination over
/// the positive bids against each seller's effective capacity; they pay
/// per `cfg.pricing` and the ledger is charged before returning.
pub fn run_srmra(
    round: u32,
    bids: &[Bid],
    sellers: &[Seller],
    ledger: &mut AuctionLedger,
    cfg: &MechanismConfig,
) -> Result<RoundOutcome> {
    check_round_bids(bids, sellers, ledger)?;
    let active: Vec<Bid> = bids.iter().filter(|b| b.amount > Money::ZERO).cloned().collect();
    let caps = sellers.iter().map(|s| (s.id, ledger.effective_capacity(s))).collect();
    let instance = WdpInstance::new(active, caps)?;
    let solve = |inst: &WdpInstance| wdp::solve(inst, cfg.solver, cfg.tie_rule, cfg.node_budget);
    let solution = solve(&instance)?;

    let mut outcome = RoundOutcome::empty(round);
    for (buyer, seller) in solution.assignment.iter() {
        let bid = instance.bid_of(buyer).expect("solver only assigns known buyers");
        outcome.winners.insert(buyer, seller);
        outcome.bids.insert(buyer, bid.amount);
        outcome.demands.insert(buyer, bid.demand.clone());
        outcome.utility += bid.amount;
    }
    outcome.payments = match cfg.pricing {
        Pricing::FirstPrice => outcome.bids.clone(),
        Pricing::Critical => {
            let mut payments = BTreeMap::new();
            for (&buyer, &amount) in &outcome.bids {
                let others = WdpInstance {
                    bids: instance.bids.iter().filter(|b| b.buyer != buyer).cloned().collect(),
                    seller_caps: instance.seller_caps.clone(),
                };
                let without = solve(&others)?.objective;
                let externality = without - (solution.objective - amount);
                payments.insert(buyer, externality.max(Money::ZERO).min(amount));
            }
            payments
        }
    };
    ledger.charge(outcome.clone())?;
    Ok(outcome)
}

fn run_rounds(scenario: &Scenario, mut effective: impl FnMut(&Bid, &AuctionLedger) -> Money) -> Result<AuctionResult> {
    let mut ledger = scenario.new_ledger()?;
    for round in 1..=scenario.horizon {
        let bids: Vec<Bid> = scenario
            .round_bids(round)
            .into_iter()
            .map(|mut bid| {
                bid.amount = effective(&bid, &ledger);
                bid
            })
            .collect();
        run_srmra(round, &bids, &scenario.sellers, &mut ledger, &scenario.mechanism)?;
    }
    Ok(AuctionResult::from_ledger(ledger))
}

/// Multi-round framework: each round every buyer's true bid is replaced by
/// [`adjust_bid`] against its remaining budget and last round's result, then
/// a single-round auction runs on the effective bids.
pub fn run_mafl(scenario: &Scenario) -> Result<AuctionResult> {
    scenario.validate()?;
    let policy = AdjustmentPolicy::from(&scenario.mechanism);
    run_rounds(scenario, |bid, ledger| {
        adjust_bid(
            bid.amount,
            ledger.remaining_budget(bid.buyer),
            ledger.initial_budget(bid.buyer),
            &policy,
            ledger.won_last_round(bid.buyer),
        )
    })
}

/// The single-round auction run every round on budget-clamped true bids.
pub fn run_repeated_srmra(scenario: &Scenario) -> Result<AuctionResult> {
    run_rounds(scenario, |bid, ledger| {
        bid.amount.min(ledger.remaining_budget(bid.buyer)).max(Money::ZERO)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MechanismKind {
    Mafl,
    RepeatedSrmra,
    DoubleAuction,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Mafl => "mafl",
            MechanismKind::RepeatedSrmra => "repeated_srmra",
            MechanismKind::DoubleAuction => "double_auction",
        }
    }

    pub fn run(self, scenario: &Scenario) -> Result<AuctionResult> {
        match self {
            MechanismKind::Mafl => run_mafl(scenario),
            MechanismKind::RepeatedSrmra => run_repeated_srmra(scenario),
            MechanismKind::DoubleAuction => run_double_auction(scenario),
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mafl" => Ok(MechanismKind::Mafl),
            "repeated_srmra" | "srmra" => Ok(MechanismKind::RepeatedSrmra),
            "double_auction" | "double" => Ok(MechanismKind::DoubleAuction),
            _ => Err(Error::UnknownMechanism(s.to_string())),
        }
    }
}
