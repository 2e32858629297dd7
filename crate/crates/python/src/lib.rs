//! Python bindings. Amounts and quantities cross the boundary as floats in
//! whole units and are rounded to the library's milli-unit fixed point.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mdc_auction as core;
use mdc_auction::simlab::{compare_with, MechanismSpec};
use mdc_auction::{AdjustScope, AdjustmentPolicy, Bid, Money, ResourceVector, WdpInstance};

fn to_py_err(err: core::Error) -> PyErr {
    if err.is_input_error() {
        PyValueError::new_err(err.to_string())
    } else {
        PyRuntimeError::new_err(err.to_string())
    }
}

fn money(value: f64, what: &str) -> PyResult<Money> {
    Money::from_decimal(value).ok_or_else(|| PyValueError::new_err(format!("{what}: {value} is not a valid amount")))
}

fn quantities(values: &[f64], what: &str) -> PyResult<ResourceVector> {
    values
        .iter()
        .map(|&v| money(v, what).map(Money::millis))
        .collect::<PyResult<Vec<_>>>()
        .map(ResourceVector::from_millis)
}

/// A validated auction scenario.
#[pyclass(name = "Scenario", module = "mdc_auction", from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: core::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Parse a scenario file's JSON text; a generator block is expanded
    /// with `seed` overriding its own seed.
    #[staticmethod]
    #[pyo3(signature = (text, seed=None))]
    fn from_json(text: &str, seed: Option<u64>) -> PyResult<Self> {
        core::Scenario::from_json(text, seed)
            .map(|inner| PyScenario { inner })
            .map_err(to_py_err)
    }

    /// Draw a scenario from generator parameters given as JSON (defaults
    /// for omitted fields).
    #[staticmethod]
    #[pyo3(signature = (params_json=None, seed=None))]
    fn generate(params_json: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let mut params: core::GeneratorParams = match params_json {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => Default::default(),
        };
        if let Some(seed) = seed {
            params.seed = seed;
        }
        core::generate_scenario(&params)
            .map(|inner| PyScenario { inner })
            .map_err(to_py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py_err)
    }

    #[getter]
    fn n_buyers(&self) -> usize {
        self.inner.buyers.len()
    }

    #[getter]
    fn n_sellers(&self) -> usize {
        self.inner.sellers.len()
    }

    #[getter]
    fn horizon(&self) -> u32 {
        self.inner.horizon
    }

    #[getter]
    fn seed(&self) -> Option<u64> {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(buyers={}, sellers={}, horizon={}, dims={})",
            self.inner.buyers.len(),
            self.inner.sellers.len(),
            self.inner.horizon,
            self.inner.dims
        )
    }
}

/// Outcome of a multi-round run.
#[pyclass(name = "AuctionResult", module = "mdc_auction", frozen)]
pub struct PyAuctionResult {
    inner: core::AuctionResult,
    metrics: core::Metrics,
}

impl From<core::AuctionResult> for PyAuctionResult {
    fn from(inner: core::AuctionResult) -> Self {
        let metrics = core::Metrics::from_result(&inner);
        PyAuctionResult { inner, metrics }
    }
}

#[pymethods]
impl PyAuctionResult {
    #[getter]
    fn total_utility(&self) -> f64 {
        self.inner.total_utility.to_f64()
    }

    #[getter]
    fn total_revenue(&self) -> f64 {
        self.inner.total_revenue.to_f64()
    }

    #[getter]
    fn round_utilities(&self) -> Vec<f64> {
        self.inner.round_utilities().into_iter().map(Money::to_f64).collect()
    }

    /// Per round, the winning buyer ids (0-based).
    #[getter]
    fn winners(&self) -> Vec<Vec<usize>> {
        self.inner.per_round.iter().map(|o| o.winner_ids()).collect()
    }

    /// Per round, buyer id to payment.
    #[getter]
    fn payments(&self) -> Vec<BTreeMap<usize, f64>> {
        self.inner
            .per_round
            .iter()
            .map(|o| o.payments.iter().map(|(b, p)| (*b, p.to_f64())).collect())
            .collect()
    }

    #[getter]
    fn remaining_budgets(&self) -> Vec<f64> {
        self.inner
            .ledger
            .remaining_budgets()
            .iter()
            .map(|m| m.to_f64())
            .collect()
    }

    /// Per buyer, the round its budget ran out, or None.
    #[getter]
    fn exhaustion_rounds(&self) -> Vec<Option<u32>> {
        self.metrics.exhaustion_rounds.clone()
    }

    #[getter]
    fn allocation_ratio(&self) -> f64 {
        self.metrics.allocation_ratio
    }

    fn __repr__(&self) -> String {
        format!(
            "AuctionResult(rounds={}, total_utility={}, total_revenue={})",
            self.inner.per_round.len(),
            self.inner.total_utility,
            self.inner.total_revenue
        )
    }
}

/// Run `mechanism` (mafl, repeated_srmra, double_auction) on a scenario.
#[pyfunction]
#[pyo3(signature = (scenario, mechanism="mafl", gamma=None, solver=None))]
fn run(scenario: &PyScenario, mechanism: &str, gamma: Option<f64>, solver: Option<&str>) -> PyResult<PyAuctionResult> {
    let mut spec: MechanismSpec = mechanism.parse().map_err(to_py_err)?;
    if let Some(gamma) = gamma {
        AdjustmentPolicy::new(gamma, AdjustScope::WinnersOnly).map_err(to_py_err)?;
        spec.gamma = Some(gamma);
    }
    if let Some(solver) = solver {
        spec.solver = Some(solver.parse().map_err(to_py_err)?);
    }
    core::evaluate(&scenario.inner, &spec)
        .map(|e| e.result.into())
        .map_err(to_py_err)
}

/// Replay a bid matrix (rows = buyers, columns = rounds) with unit demands
/// against one seller holding `items_per_round` items.
#[pyfunction]
fn replay(bids: Vec<Vec<f64>>, budgets: Vec<f64>, items_per_round: usize) -> PyResult<PyAuctionResult> {
    let matrix = bids
        .iter()
        .map(|row| row.iter().map(|&a| money(a, "bid")).collect::<PyResult<Vec<_>>>())
        .collect::<PyResult<Vec<_>>>()?;
    let budgets = budgets
        .iter()
        .map(|&b| money(b, "budget"))
        .collect::<PyResult<Vec<_>>>()?;
    core::replay(&matrix, &budgets, items_per_round)
        .map(Into::into)
        .map_err(to_py_err)
}

fn instance(bids: Vec<(f64, Vec<f64>)>, capacities: Vec<Vec<f64>>) -> PyResult<WdpInstance> {
    let bids = bids
        .into_iter()
        .enumerate()
        .map(|(buyer, (amount, demand))| {
            Ok(Bid {
                buyer,
                round: 1,
                amount: money(amount, "amount")?,
                demand: quantities(&demand, "demand")?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let caps = capacities
        .iter()
        .enumerate()
        .map(|(j, c)| quantities(c, "capacity").map(|v| (j, v)))
        .collect::<PyResult<_>>()?;
    WdpInstance::new(bids, caps).map_err(to_py_err)
}

fn solution_tuple(sol: core::WdpSolution) -> (BTreeMap<usize, usize>, f64, bool) {
    (sol.assignment.iter().collect(), sol.objective.to_f64(), sol.optimal)
}

/// Exact winner determination. `bids` is a list of `(amount, demand)`
/// with buyer ids given by position; returns `(assignment, objective, optimal)`.
#[pyfunction]
fn solve_exact(bids: Vec<(f64, Vec<f64>)>, capacities: Vec<Vec<f64>>) -> PyResult<(BTreeMap<usize, usize>, f64, bool)> {
    let inst = instance(bids, capacities)?;
    core::solve_exact(&inst).map(solution_tuple).map_err(to_py_err)
}

/// Density-greedy winner determination; same arguments as `solve_exact`.
#[pyfunction]
fn solve_greedy(
    bids: Vec<(f64, Vec<f64>)>,
    capacities: Vec<Vec<f64>>,
) -> PyResult<(BTreeMap<usize, usize>, f64, bool)> {
    let inst = instance(bids, capacities)?;
    core::solve_greedy(&inst).map(solution_tuple).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (true_amount, remaining, initial, gamma=1.0, won_previous=true, scope="winners_only"))]
fn adjust_bid(
    true_amount: f64,
    remaining: f64,
    initial: f64,
    gamma: f64,
    won_previous: bool,
    scope: &str,
) -> PyResult<f64> {
    let scope = match scope {
        "winners_only" => AdjustScope::WinnersOnly,
        "all_buyers" => AdjustScope::AllBuyers,
        other => return Err(PyValueError::new_err(format!("unknown scope `{other}`"))),
    };
    let policy = AdjustmentPolicy::new(gamma, scope).map_err(to_py_err)?;
    Ok(core::adjust_bid(
        money(true_amount, "true_amount")?,
        money(remaining, "remaining")?,
        money(initial, "initial")?,
        &policy,
        won_previous,
    )
    .to_f64())
}

/// Paired comparison over generated scenarios; returns the summary as a dict.
#[pyfunction]
#[pyo3(signature = (params_json=None, mechanisms="mafl,repeated_srmra", n_seeds=100))]
fn compare<'py>(
    py: Python<'py>,
    params_json: Option<&str>,
    mechanisms: &str,
    n_seeds: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let params: core::GeneratorParams = match params_json {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => Default::default(),
    };
    let specs = MechanismSpec::parse_list(mechanisms).map_err(to_py_err)?;
    let report = py
        .detach(|| compare_with(&params, &core::MechanismConfig::default(), &specs, n_seeds))
        .map_err(to_py_err)?;
    let json = report.summary_json().map_err(to_py_err)?;
    let summary = py.import("json")?.call_method1("loads", (json,))?;
    let rows = PyDict::new(py);
    rows.set_item("csv", report.to_csv())?;
    summary.call_method1("update", (rows,))?;
    Ok(summary)
}

#[pymodule]
#[pyo3(name = "mdc_auction")]
fn mdc_auction_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyAuctionResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(solve_exact, m)?)?;
    m.add_function(wrap_pyfunction!(solve_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(adjust_bid, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_through_binding_layer() {
        let result = replay(
            vec![
                vec![3.0, 4.0, 3.0, 2.0, 1.0, 1.0],
                vec![4.0, 5.0, 0.0, 0.0, 0.0, 0.0],
                vec![5.0, 5.0, 0.0, 0.0, 0.0, 0.0],
            ],
            vec![15.0, 9.0, 10.0],
            2,
        )
        .unwrap();
        assert_eq!(result.total_utility(), 26.0);
        assert_eq!(result.round_utilities(), vec![9.0, 10.0, 3.0, 2.0, 1.0, 1.0]);
        assert_eq!(result.exhaustion_rounds(), vec![None, Some(2), Some(2)]);
    }

    #[test]
    fn solve_exact_through_binding_layer() {
        let (assignment, objective, optimal) = solve_exact(
            vec![(5.0, vec![2.0, 1.0]), (4.0, vec![1.0, 2.0]), (6.0, vec![2.0, 2.0])],
            vec![vec![3.0, 3.0]],
        )
        .unwrap();
        assert_eq!(assignment.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(objective, 9.0);
        assert!(optimal);
    }

    #[test]
    fn adjust_bid_through_binding_layer() {
        assert_eq!(adjust_bid(4.0, 5.0, 9.0, 1.0, true, "winners_only").unwrap(), 2.222);
        assert_eq!(adjust_bid(4.0, 5.0, 9.0, 1.0, false, "winners_only").unwrap(), 4.0);
    }

    #[test]
    fn scenario_round_trip() {
        let s = PyScenario::generate(Some(r#"{"n_buyers": 3, "horizon": 4}"#), Some(5)).unwrap();
        assert_eq!((s.n_buyers(), s.horizon(), s.seed()), (3, 4, Some(5)));
        let back = PyScenario::from_json(&s.to_json().unwrap(), None).unwrap();
        assert_eq!(back.inner, s.inner);
    }
}
