//! Seeded workload generation, run metrics and paired multi-mechanism
//! comparisons.
//!
//! Scenarios are drawn from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, using `rand` 0.8 uniform integer sampling. Draw order:
//! every buyer's budget; then per seller its round capacity per dimension,
//! period capacity per dimension (when configured) and ask; then for each
//! round, for each buyer, the bid amount followed by its demand per
//! dimension.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{AuctionResult, MechanismKind};
use crate::model::{Buyer, Money, ResourceVector, Seller, MILLIS_PER_UNIT};
use crate::scenario::{BidEntry, MechanismConfig, Scenario, SolverKind};

pub const GENERATOR_ID: &str = "chacha8/rand-0.8-uniform";

const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Inclusive integer range in whole units, written `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct UnitRange {
    pub lo: i64,
    pub hi: i64,
}

impl UnitRange {
    pub const fn new(lo: i64, hi: i64) -> Self {
        UnitRange { lo, hi }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if self.lo < 0 {
            return Err(Error::validation(field, "bounds must be non-negative"));
        }
        if self.lo > self.hi {
            return Err(Error::validation(
                field,
                format!("lower bound {} above upper bound {}", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    fn sample_millis(&self, rng: &mut ChaCha8Rng) -> i64 {
        rng.gen_range(self.lo..=self.hi) * MILLIS_PER_UNIT
    }
}

impl From<[i64; 2]> for UnitRange {
    fn from([lo, hi]: [i64; 2]) -> Self {
        UnitRange { lo, hi }
    }
}

impl From<UnitRange> for [i64; 2] {
    fn from(r: UnitRange) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub n_buyers: usize,
    pub m_sellers: usize,
    pub horizon: u32,
    pub dims: usize,
    /// One range per dimension.
    pub demand: Vec<UnitRange>,
    pub bid: UnitRange,
    pub budget: UnitRange,
    /// Per-round seller capacity, one range per dimension.
    pub capacity: Vec<UnitRange>,
    /// Whole-horizon seller capacity; unbounded when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period_capacity: Option<Vec<UnitRange>>,
    /// Seller ask per unit of normalized demand (double auction only).
    pub ask: UnitRange,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            n_buyers: 12,
            m_sellers: 2,
            horizon: 20,
            dims: 3,
            demand: vec![UnitRange::new(1, 5); 3],
            bid: UnitRange::new(1, 20),
            budget: UnitRange::new(50, 200),
            capacity: vec![UnitRange::new(10, 30); 3],
            period_capacity: None,
            ask: UnitRange::new(1, 6),
            seed: 0,
        }
    }
}

impl GeneratorParams {
    /// The larger market profile with 40 buyers.
    pub fn users40() -> Self {
        GeneratorParams {
            n_buyers: 40,
            m_sellers: 4,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::validation("generator.horizon", "must be at least 1"));
        }
        for (name, ranges) in [("demand", &self.demand), ("capacity", &self.capacity)]
            .into_iter()
            .chain(self.period_capacity.as_ref().map(|p| ("period_capacity", p)))
        {
            if ranges.len() != self.dims {
                return Err(Error::validation(
                    format!("generator.{name}"),
                    format!("has {} ranges for {} dimensions", ranges.len(), self.dims),
                ));
            }
            for (k, r) in ranges.iter().enumerate() {
                r.validate(&format!("generator.{name}[{k}]"))?;
            }
        }
        self.bid.validate("generator.bid")?;
        self.budget.validate("generator.budget")?;
        self.ask.validate("generator.ask")?;
        Ok(())
    }
}

/// Draws a scenario; identical params always give an identical scenario.
pub fn generate_scenario(params: &GeneratorParams) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let draw = |ranges: &[UnitRange], rng: &mut ChaCha8Rng| {
        ResourceVector::from_millis(ranges.iter().map(|r| r.sample_millis(rng)).collect())
    };

    let buyers = (0..params.n_buyers)
        .map(|id| Buyer {
            id,
            initial_budget: Money::from_millis(params.budget.sample_millis(&mut rng)),
        })
        .collect();
    let sellers = (0..params.m_sellers)
        .map(|id| {
            let round_capacity = draw(&params.capacity, &mut rng);
            let period_capacity = match &params.period_capacity {
                Some(ranges) => draw(ranges, &mut rng),
                None => ResourceVector::unbounded(params.dims),
            };
            let ask = Money::from_millis(params.ask.sample_millis(&mut rng));
            Seller {
                id,
                round_capacity,
                period_capacity,
                ask: Some(ask),
            }
        })
        .collect();

    let mut bids: Vec<Vec<BidEntry>> = vec![Vec::with_capacity(params.horizon as usize); params.n_buyers];
    for _round in 0..params.horizon {
        for row in bids.iter_mut() {
            let amount = Money::from_millis(params.bid.sample_millis(&mut rng));
            let demand = draw(&params.demand, &mut rng);
            row.push(BidEntry { amount, demand });
        }
    }

    let scenario = Scenario {
        dims: params.dims,
        buyers,
        sellers,
        horizon: params.horizon,
        bids,
        mechanism: MechanismConfig::default(),
        seed: Some(params.seed),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// A mechanism plus optional overrides of the scenario's settings, written
/// `name[:key=value,...]`, e.g. `mafl:gamma=0` or `repeated_srmra:solver=greedy`.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub gamma: Option<f64>,
    pub solver: Option<SolverKind>,
}

impl MechanismSpec {
    pub fn new(kind: MechanismKind) -> Self {
        MechanismSpec {
            kind,
            gamma: None,
            solver: None,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn apply(&self, cfg: &MechanismConfig) -> MechanismConfig {
        let mut cfg = cfg.clone();
        if let Some(gamma) = self.gamma {
            cfg.gamma = gamma;
        }
        if let Some(solver) = self.solver {
            cfg.solver = solver;
        }
        cfg
    }

    /// Parses a comma-free list such as `mafl;repeated_srmra` or the CLI's
    /// comma-separated form where overrides use `:`.
    pub fn parse_list(text: &str) -> Result<Vec<MechanismSpec>> {
        text.split([',', ';'])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for MechanismSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        let mut sep = ':';
        if let Some(gamma) = self.gamma {
            write!(f, "{sep}gamma={gamma}")?;
            sep = '+';
        }
        if let Some(solver) = self.solver {
            let name = match solver {
                SolverKind::Exact => "exact",
                SolverKind::Greedy => "greedy",
            };
            write!(f, "{sep}solver={name}")?;
        }
        Ok(())
    }
}

impl FromStr for MechanismSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = MechanismSpec::new(name.parse()?);
        for pair in rest.split('+').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::validation("mechanism", format!("override `{pair}` is not key=value")))?;
            match key.trim() {
                "gamma" => {
                    let gamma: f64 = value
                        .trim()
                        .parse()
                        .map_err(|_| Error::validation("mechanism.gamma", format!("`{value}` is not a number")))?;
                    if !gamma.is_finite() || gamma < 0.0 {
                        return Err(Error::validation("mechanism.gamma", "must be finite and >= 0"));
                    }
                    spec.gamma = Some(gamma);
                }
                "solver" => spec.solver = Some(value.trim().parse()?),
                other => return Err(Error::validation("mechanism", format!("unknown override `{other}`"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub total_revenue: Money,
    pub total_utility: Money,
    /// Per buyer, the first round after which its remaining budget is zero
    /// (0 for a buyer that starts with nothing); `None` if never.
    pub exhaustion_rounds: Vec<Option<u32>>,
    /// Winner-rounds over buyer-rounds.
    pub allocation_ratio: f64,
}

impl Metrics {
    pub fn from_result(result: &AuctionResult) -> Self {
        let ledger = &result.ledger;
        let n = ledger.n_buyers();
        let mut remaining = ledger.initial_budgets().to_vec();
        let mut exhaustion: Vec<Option<u32>> = remaining.iter().map(|b| (*b <= Money::ZERO).then_some(0)).collect();
        let mut wins = 0usize;
        for outcome in &result.per_round {
            wins += outcome.winners.len();
            for (&buyer, &paid) in &outcome.payments {
                remaining[buyer] -= paid;
                if exhaustion[buyer].is_none() && remaining[buyer] <= Money::ZERO {
                    exhaustion[buyer] = Some(outcome.round);
                }
            }
        }
        let buyer_rounds = n * result.per_round.len();
        Metrics {
            total_revenue: result.per_round.iter().map(|o| o.revenue()).sum(),
            total_utility: result.per_round.iter().map(|o| o.utility).sum(),
            exhaustion_rounds: exhaustion,
            allocation_ratio: if buyer_rounds == 0 {
                0.0
            } else {
                wins as f64 / buyer_rounds as f64
            },
        }
    }

    pub fn exhausted_buyers(&self) -> usize {
        self.exhaustion_rounds.iter().flatten().count()
    }

    pub fn mean_exhaustion_round(&self) -> Option<f64> {
        let rounds: Vec<u32> = self.exhaustion_rounds.iter().flatten().copied().collect();
        (!rounds.is_empty()).then(|| rounds.iter().map(|&r| r as f64).sum::<f64>() / rounds.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub result: AuctionResult,
    pub metrics: Metrics,
}

pub fn evaluate(scenario: &Scenario, mechanism: &MechanismSpec) -> Result<Evaluation> {
    let mut scenario = scenario.clone();
    scenario.mechanism = mechanism.apply(&scenario.mechanism);
    let result = mechanism.kind.run(&scenario)?;
    let metrics = Metrics::from_result(&result);
    Ok(Evaluation { result, metrics })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    /// One entry per mechanism, in report order.
    pub metrics: Vec<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MechanismSummary {
    pub mechanism: String,
    pub mean_revenue: f64,
    pub median_revenue: f64,
    pub mean_utility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    /// `(mean_a - mean_b) / mean_b * 100` over total revenue; `None` when
    /// `mean_b` is zero and `mean_a` is not.
    pub improvement_pct: Option<f64>,
    pub ci95_low: Option<f64>,
    pub ci95_high: Option<f64>,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// Fraction of seeds where A's revenue is strictly higher.
    pub win_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub generator: String,
    pub base_seed: u64,
    pub n_seeds: usize,
    pub mechanisms: Vec<String>,
    pub summaries: Vec<MechanismSummary>,
    pub pairs: Vec<PairComparison>,
    #[serde(skip)]
    pub runs: Vec<SeedRun>,
}

fn improvement(mean_a: f64, mean_b: f64) -> Option<f64> {
    if mean_b == 0.0 {
        (mean_a == 0.0).then_some(0.0)
    } else {
        Some((mean_a - mean_b) / mean_b * 100.0)
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}

/// Percentile bootstrap over paired seeds for the mean-revenue improvement.
fn bootstrap_interval(a: &[f64], b: &[f64], seed: u64) -> Option<(f64, f64)> {
    let n = a.len();
    if n == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB007_57A9);
    let mut samples = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let k = rng.gen_range(0..n);
            sa += a[k];
            sb += b[k];
        }
        if let Some(v) = improvement(sa / n as f64, sb / n as f64) {
            samples.push(v);
        }
    }
    if samples.is_empty() {
        return None;
    }
    samples.sort_by(f64::total_cmp);
    let at = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
    Some((at(0.025), at(0.975)))
}

/// Runs every mechanism on the same generated scenario for seeds
/// `params.seed .. params.seed + n_seeds`. `base` supplies mechanism
/// settings that the specs do not override.
pub fn compare_with(
    params: &GeneratorParams,
    base: &MechanismConfig,
    mechanisms: &[MechanismSpec],
    n_seeds: usize,
) -> Result<ComparisonReport> {
    if n_seeds == 0 {
        return Err(Error::validation("seeds", "need at least one seed"));
    }
    params.validate()?;
    base.validate()?;
    let runs: Vec<SeedRun> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|offset| {
            let seed = params.seed.wrapping_add(offset);
            let mut scenario = generate_scenario(&GeneratorParams { seed, ..params.clone() })?;
            scenario.mechanism = base.clone();
            let metrics = mechanisms
                .iter()
                .map(|m| evaluate(&scenario, m).map(|e| e.metrics))
                .collect::<Result<Vec<_>>>()?;
            Ok(SeedRun { seed, metrics })
        })
        .collect::<Result<_>>()?;

    let revenue = |k: usize| -> Vec<f64> { runs.iter().map(|r| r.metrics[k].total_revenue.to_f64()).collect() };
    let names: Vec<String> = mechanisms.iter().map(ToString::to_string).collect();
    let summaries = (0..mechanisms.len())
        .map(|k| {
            let rev = revenue(k);
            let util: Vec<f64> = runs.iter().map(|r| r.metrics[k].total_utility.to_f64()).collect();
            MechanismSummary {
                mechanism: names[k].clone(),
                mean_revenue: mean(&rev),
                median_revenue: median(&rev),
                mean_utility: mean(&util),
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for a in 0..mechanisms.len() {
        for b in a + 1..mechanisms.len() {
            let (ra, rb) = (revenue(a), revenue(b));
            let wins_a = runs
                .iter()
                .filter(|r| r.metrics[a].total_revenue > r.metrics[b].total_revenue)
                .count();
            let wins_b = runs
                .iter()
                .filter(|r| r.metrics[a].total_revenue < r.metrics[b].total_revenue)
                .count();
            let interval = bootstrap_interval(&ra, &rb, params.seed);
            pairs.push(PairComparison {
                a: names[a].clone(),
                b: names[b].clone(),
                improvement_pct: improvement(mean(&ra), mean(&rb)),
                ci95_low: interval.map(|i| i.0),
                ci95_high: interval.map(|i| i.1),
                wins_a,
                wins_b,
                ties: n_seeds - wins_a - wins_b,
                win_rate: wins_a as f64 / n_seeds as f64,
            });
        }
    }

    Ok(ComparisonReport {
        generator: GENERATOR_ID.to_string(),
        base_seed: params.seed,
        n_seeds,
        mechanisms: names,
        summaries,
        pairs,
        runs,
    })
}

pub fn compare(params: &GeneratorParams, mechanisms: &[MechanismSpec], n_seeds: usize) -> Result<ComparisonReport> {
    compare_with(params, &MechanismConfig::default(), mechanisms, n_seeds)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl ComparisonReport {
    /// One row per seed and mechanism, ordered by seed.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("seed,mechanism,revenue,utility,allocation_ratio,exhausted_buyers,mean_exhaustion_round\n");
        for run in &self.runs {
            for (name, m) in self.mechanisms.iter().zip(&run.metrics) {
                writeln!(
                    out,
                    "{},{},{},{},{:.6},{},{}",
                    run.seed,
                    name,
                    m.total_revenue,
                    m.total_utility,
                    m.allocation_ratio,
                    m.exhausted_buyers(),
                    fmt_opt(m.mean_exhaustion_round()),
                )
                .expect("writing to a String cannot fail");
            }
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn pair(&self, a: &str, b: &str) -> Option<&PairComparison> {
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }
}
