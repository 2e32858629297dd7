//! Winner determination: pick the set of bids (and the seller serving each)
//! that maximizes the sum of accepted amounts, with every buyer served by at
//! most one seller and every seller's capacity respected in all dimensions.
//! This is a multiple-choice multidimensional 0-1 knapsack.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{Assignment, Bid, BuyerId, Money, ResourceVector, SellerId};
use crate::scenario::{SolverKind, TieRule, DEFAULT_NODE_BUDGET};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WdpInstance {
    pub bids: Vec<Bid>,
    /// Capacity each seller can offer this round.
    pub seller_caps: BTreeMap<SellerId, ResourceVector>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WdpSolution {
    pub assignment: Assignment,
    pub objective: Money,
    /// True when the solver proved the objective maximal.
    pub optimal: bool,
}

impl WdpSolution {
    fn empty(optimal: bool) -> Self {
        WdpSolution {
            assignment: Assignment::new(),
            objective: Money::ZERO,
            optimal,
        }
    }
}

impl WdpInstance {
    pub fn new(bids: Vec<Bid>, seller_caps: BTreeMap<SellerId, ResourceVector>) -> Result<Self> {
        let instance = WdpInstance { bids, seller_caps };
        instance.validate()?;
        Ok(instance)
    }

    pub fn dims(&self) -> Option<usize> {
        self.seller_caps
            .values()
            .next()
            .map(ResourceVector::dims)
            .or_else(|| self.bids.first().map(|b| b.demand.dims()))
    }

    pub fn bid_of(&self, buyer: BuyerId) -> Option<&Bid> {
        self.bids.iter().find(|b| b.buyer == buyer)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims().unwrap_or(0);
        let mut seen = BTreeSet::new();
        for (k, bid) in self.bids.iter().enumerate() {
            if !seen.insert(bid.buyer) {
                return Err(Error::validation(
                    format!("bids[{k}].buyer"),
                    format!("buyer {} bids more than once", bid.buyer),
                ));
            }
            if bid.amount < Money::ZERO {
                return Err(Error::validation(format!("bids[{k}].amount"), "must be non-negative"));
            }
            if bid.demand.dims() != dims {
                return Err(Error::validation(
                    format!("bids[{k}].demand"),
                    format!("has {} dimensions, instance has {dims}", bid.demand.dims()),
                ));
            }
            if !bid.demand.is_non_negative() {
                return Err(Error::validation(
                    format!("bids[{k}].demand"),
                    "components must be non-negative",
                ));
            }
        }
        for (seller, cap) in &self.seller_caps {
            if cap.dims() != dims {
                return Err(Error::validation(
                    format!("seller_caps[{seller}]"),
                    format!("has {} dimensions, instance has {dims}", cap.dims()),
                ));
            }
            if !cap.is_non_negative() {
                return Err(Error::validation(
                    format!("seller_caps[{seller}]"),
                    "components must be non-negative",
                ));
            }
        }
        Ok(())
    }

    /// Sum of the bid amounts of the buyers in `assignment`.
    pub fn objective_of(&self, assignment: &Assignment) -> Money {
        assignment
            .buyers()
            .filter_map(|b| self.bid_of(b))
            .map(|b| b.amount)
            .sum()
    }
}

/// Whether `assignment` gives every seller a load within its capacity.
/// One seller per buyer holds by construction of [`Assignment`].
pub fn check_feasible(assignment: &Assignment, instance: &WdpInstance) -> Result<bool> {
    let dims = instance.dims().unwrap_or(0);
    let mut load: BTreeMap<SellerId, ResourceVector> = BTreeMap::new();
    for (buyer, seller) in assignment.iter() {
        let bid = instance
            .bid_of(buyer)
            .ok_or_else(|| Error::validation("assignment", format!("unknown buyer {buyer}")))?;
        if !instance.seller_caps.contains_key(&seller) {
            return Err(Error::validation("assignment", format!("unknown seller {seller}")));
        }
        let entry = load.entry(seller).or_insert_with(|| ResourceVector::zeros(dims));
        *entry = entry.saturating_add(&bid.demand);
    }
    Ok(load
        .iter()
        .all(|(seller, served)| served.fits_within(&instance.seller_caps[seller])))
}

/// Positive-amount bids and sellers laid out in canonical tie-break order.
struct Prepared {
    buyers: Vec<BuyerId>,
    amounts: Vec<i64>,
    demands: Vec<Vec<i64>>,
    sellers: Vec<SellerId>,
    caps: Vec<Vec<i64>>,
    dims: usize,
}

impl Prepared {
    fn new(instance: &WdpInstance, tie_rule: TieRule) -> Result<Self> {
        instance.validate()?;
        let mut bids: Vec<&Bid> = instance.bids.iter().filter(|b| b.amount > Money::ZERO).collect();
        bids.sort_by_key(|b| b.buyer);
        let mut sellers: Vec<(&SellerId, &ResourceVector)> = instance.seller_caps.iter().collect();
        if tie_rule == TieRule::HighestIndex {
            bids.reverse();
            sellers.reverse();
        }
        Ok(Prepared {
            buyers: bids.iter().map(|b| b.buyer).collect(),
            amounts: bids.iter().map(|b| b.amount.millis()).collect(),
            demands: bids.iter().map(|b| b.demand.millis().to_vec()).collect(),
            sellers: sellers.iter().map(|(id, _)| **id).collect(),
            caps: sellers.iter().map(|(_, cap)| cap.millis().to_vec()).collect(),
            dims: instance.dims().unwrap_or(0),
        })
    }

    fn solution(&self, choice: &[Option<usize>], objective: i64, optimal: bool) -> WdpSolution {
        WdpSolution {
            assignment: choice
                .iter()
                .enumerate()
                .filter_map(|(k, c)| c.map(|s| (self.buyers[k], self.sellers[s])))
                .collect(),
            objective: Money::from_millis(objective),
            optimal,
        }
    }
}

fn fits(demand: &[i64], residual: &[i64]) -> bool {
    demand.iter().zip(residual).all(|(d, r)| d <= r)
}

/// Depth-first branch and bound over buyers in canonical order. Each buyer
/// tries every seller with room (canonical order) before staying unassigned,
/// and the incumbent is only replaced by a strictly better assignment, so
/// among optimal assignments the first one in that order is returned.
#[derive(Clone, Copy, Debug)]
pub struct ExactSolver {
    pub node_budget: u64,
    pub tie_rule: TieRule,
}

impl Default for ExactSolver {
    fn default() -> Self {
        ExactSolver {
            node_budget: DEFAULT_NODE_BUDGET,
            tie_rule: TieRule::LowestIndex,
        }
    }
}

struct Search<'a> {
    p: &'a Prepared,
    /// Suffix sums of amounts: `suffix[k]` = sum of amounts of items k..
    suffix: Vec<i64>,
    /// Per dimension, item indices by decreasing amount per unit of that dimension.
    density_order: Vec<Vec<usize>>,
    residual: Vec<Vec<i64>>,
    choice: Vec<Option<usize>>,
    best_value: i64,
    best_choice: Vec<Option<usize>>,
    nodes: u64,
    node_budget: u64,
}

impl Search<'_> {
    /// Admissible upper bound on what items `k..` can still add: the smaller
    /// of their plain sum and, per dimension, the fractional knapsack value
    /// against the pooled residual capacity of all sellers.
    fn bound(&self, k: usize) -> i64 {
        let mut bound = self.suffix[k];
        for (dim, order) in self.density_order.iter().enumerate() {
            let mut room: i128 = self.residual.iter().map(|r| r[dim] as i128).sum();
            let mut value: i128 = 0;
            for &item in order {
                if item < k {
                    continue;
                }
                let amount = self.p.amounts[item] as i128;
                let weight = self.p.demands[item][dim] as i128;
                if weight <= room {
                    value += amount;
                    room -= weight;
                } else {
                    // ceiling keeps the bound admissible in integer arithmetic
                    value += (amount * room + weight - 1) / weight;
                    break;
                }
            }
            bound = bound.min(value.min(i64::MAX as i128) as i64);
        }
        bound
    }

    fn run(&mut self, k: usize, value: i64) -> bool {
        self.nodes += 1;
        if self.nodes > self.node_budget {
            return false;
        }
        if k == self.p.amounts.len() {
            if value > self.best_value {
                self.best_value = value;
                self.best_choice.clone_from(&self.choice);
            }
            return true;
        }
        if value + self.suffix[k] <= self.best_value || value + self.bound(k) <= self.best_value {
            return true;
        }
        for s in 0..self.p.sellers.len() {
            if !fits(&self.p.demands[k], &self.residual[s]) {
                continue;
            }
            for (r, d) in self.residual[s].iter_mut().zip(&self.p.demands[k]) {
                *r -= d;
            }
            self.choice[k] = Some(s);
            let completed = self.run(k + 1, value + self.p.amounts[k]);
            for (r, d) in self.residual[s].iter_mut().zip(&self.p.demands[k]) {
                *r += d;
            }
            self.choice[k] = None;
            if !completed {
                return false;
            }
        }
        self.run(k + 1, value)
    }
}

impl ExactSolver {
    pub fn new(node_budget: u64, tie_rule: TieRule) -> Self {
        ExactSolver { node_budget, tie_rule }
    }

    pub fn solve(&self, instance: &WdpInstance) -> Result<WdpSolution> {
        let p = Prepared::new(instance, self.tie_rule)?;
        let n = p.amounts.len();
        if n == 0 || p.sellers.is_empty() {
            return Ok(WdpSolution::empty(true));
        }
        let mut suffix = vec![0i64; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] + p.amounts[k];
        }
        let density_order = (0..p.dims)
            .map(|dim| {
                let mut order: Vec<usize> = (0..n).collect();
                // a/w > b/v  <=>  a*v > b*w, zero weights first
                order.sort_by(|&x, &y| {
                    let (ax, wx) = (p.amounts[x] as i128, p.demands[x][dim] as i128);
                    let (ay, wy) = (p.amounts[y] as i128, p.demands[y][dim] as i128);
                    (ay * wx).cmp(&(ax * wy)).then(x.cmp(&y))
                });
                order
            })
            .collect();
        let mut search = Search {
            p: &p,
            suffix,
            density_order,
            residual: p.caps.clone(),
            choice: vec![None; n],
            best_value: 0,
            best_choice: vec![None; n],
            nodes: 0,
            node_budget: self.node_budget,
        };
        if search.run(0, 0) {
            Ok(p.solution(&search.best_choice, search.best_value, true))
        } else {
            Err(Error::SearchBudgetExceeded {
                node_budget: self.node_budget,
                best: Box::new(p.solution(&search.best_choice, search.best_value, false)),
            })
        }
    }
}

/// Exact solve with the default node budget and lowest-index tie-breaking.
pub fn solve_exact(instance: &WdpInstance) -> Result<WdpSolution> {
    ExactSolver::default().solve(instance)
}

/// Density-ordered greedy. Bids are ranked by
/// `amount / (1 + sum of demand components normalized by total capacity)`,
/// and each goes to the feasible seller that keeps the largest minimum
/// normalized slack afterwards.
pub fn solve_greedy_with(instance: &WdpInstance, tie_rule: TieRule) -> Result<WdpSolution> {
    let p = Prepared::new(instance, tie_rule)?;
    let totals: Vec<f64> = (0..p.dims)
        .map(|dim| p.caps.iter().map(|c| c[dim] as f64).sum())
        .collect();
    let normalized = |dim: usize, q: i64| -> Option<f64> { (totals[dim] > 0.0).then(|| q as f64 / totals[dim]) };
    let density: Vec<f64> = (0..p.amounts.len())
        .map(|k| {
            let size: f64 = (0..p.dims).filter_map(|dim| normalized(dim, p.demands[k][dim])).sum();
            p.amounts[k] as f64 / (1.0 + size)
        })
        .collect();
    let mut order: Vec<usize> = (0..p.amounts.len()).collect();
    order.sort_by(|&x, &y| {
        density[y]
            .partial_cmp(&density[x])
            .unwrap_or(Ordering::Equal)
            .then(x.cmp(&y))
    });

    let mut residual = p.caps.clone();
    let mut choice = vec![None; p.amounts.len()];
    let mut objective = 0i64;
    for k in order {
        let mut best: Option<(usize, f64)> = None;
        for (s, res) in residual.iter().enumerate() {
            if !fits(&p.demands[k], res) {
                continue;
            }
            let slack = (0..p.dims)
                .filter_map(|dim| normalized(dim, res[dim] - p.demands[k][dim]))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, b)| slack > b) {
                best = Some((s, slack));
            }
        }
        if let Some((s, _)) = best {
            for (r, d) in residual[s].iter_mut().zip(&p.demands[k]) {
                *r -= d;
            }
            choice[k] = Some(s);
            objective += p.amounts[k];
        }
    }
    Ok(p.solution(&choice, objective, false))
}

pub fn solve_greedy(instance: &WdpInstance) -> Result<WdpSolution> {
    solve_greedy_with(instance, TieRule::LowestIndex)
}

pub fn solve(instance: &WdpInstance, solver: SolverKind, tie_rule: TieRule, node_budget: u64) -> Result<WdpSolution> {
    match solver {
        SolverKind::Exact => ExactSolver::new(node_budget, tie_rule).solve(instance),
        SolverKind::Greedy => solve_greedy_with(instance, tie_rule),
    }
}
