//! Python bindings: scenario loading, market clearing, strategic bid
//! optimization, and the mitigation pipeline.
//!
//! Structured results cross the boundary as JSON strings so the Python
//! side can `json.loads` them without a wrapper class per result type.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::json;

use mitbid_core::bidding::{owner_profit, solve_bid, threshold_sweep, Strategy};
use mitbid_core::clearing::{clear, reference_prices, ClearingResult, OfferSet};
use mitbid_core::mitigation::run_pipeline;
use mitbid_core::network;
use mitbid_core::report::{comparison_csv, strategy_comparison};
use mitbid_core::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Scenario(_) | Error::Validation(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn clearing_json(s: &network::Scenario, r: &ClearingResult) -> serde_json::Value {
    json!({
        "lmp": r.lmp,
        "unit_dispatch": r.unit_dispatch,
        "dispatch": r.dispatch,
        "flows": r.flows,
        "profits": r.profits,
        "total_offered_cost": r.total_offered_cost,
        "total_true_cost": r.total_true_cost,
        "owner_profit": owner_profit(s, &s.strategic_owner, r),
    })
}

/// A market scenario: network, generating units, and mitigation settings.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: network::Scenario,
}

impl PyScenario {
    fn offers_from(&self, prices: Option<Vec<Vec<f64>>>) -> PyResult<OfferSet> {
        let offers = match prices {
            None => OfferSet::truthful(&self.inner),
            Some(prices) => OfferSet { prices },
        };
        offers.validate(&self.inner).map_err(to_py_err)?;
        Ok(offers)
    }
}

#[pymethods]
impl PyScenario {
    #[getter]
    fn notes(&self) -> Option<String> {
        self.inner.notes.clone()
    }

    #[getter]
    fn strategic_owner(&self) -> String {
        self.inner.strategic_owner.clone()
    }

    fn total_load(&self) -> f64 {
        self.inner.total_load()
    }

    fn unit_ids(&self) -> Vec<String> {
        self.inner.units.iter().map(|u| u.id.clone()).collect()
    }

    /// True marginal cost of every block, aligned with `unit_ids`.
    fn true_costs(&self) -> Vec<Vec<f64>> {
        OfferSet::truthful(&self.inner).prices
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Clear the market (truthful offers unless block prices are given);
    /// returns a JSON object with prices, dispatch, and profits.
    #[pyo3(signature = (offers=None))]
    fn clear(&self, offers: Option<Vec<Vec<f64>>>) -> PyResult<String> {
        let offers = self.offers_from(offers)?;
        let r = clear(&self.inner, &offers, true).map_err(to_py_err)?;
        Ok(clearing_json(&self.inner, &r).to_string())
    }

    /// Competitive (truthful-clearing) price at every bus.
    fn reference_prices(&self) -> PyResult<Vec<f64>> {
        reference_prices(&self.inner).map_err(to_py_err)
    }

    /// Optimize the strategic owner's offers for one strategy
    /// (`"nonstrategic"`, `"unaware"`, `"conduct"`, or `"impact"`).
    fn solve_bid(&self, strategy: &str) -> PyResult<String> {
        let strategy = Strategy::parse(strategy).map_err(to_py_err)?;
        if strategy == Strategy::NonStrategic {
            let offers = OfferSet::truthful(&self.inner);
            let r = clear(&self.inner, &offers, true).map_err(to_py_err)?;
            return Ok(json!({
                "strategy": strategy.name(),
                "offers": offers.prices,
                "predicted_profit": owner_profit(&self.inner, &self.inner.strategic_owner, &r),
                "nodes": 0,
                "gap": 0.0,
                "undercut_applied": false,
            })
            .to_string());
        }
        let bid = solve_bid(&self.inner, strategy).map_err(to_py_err)?;
        Ok(json!({
            "strategy": strategy.name(),
            "offers": bid.offers.prices,
            "predicted_profit": bid.predicted_profit,
            "nodes": bid.nodes,
            "gap": bid.gap,
            "undercut_applied": bid.undercut_applied,
        })
        .to_string())
    }

    /// Screen submitted offers through the conduct and impact tests and
    /// re-clear; returns before/after prices, dispatch, and profits.
    fn run_pipeline(&self, offers: Vec<Vec<f64>>) -> PyResult<String> {
        let offers = self.offers_from(Some(offers))?;
        let rep = run_pipeline(&self.inner, &offers).map_err(to_py_err)?;
        Ok(json!({
            "mitigated": rep.mitigated(),
            "impact_triggered": rep.impact_triggered,
            "conduct_failures": rep.conduct_failures,
            "final_offers": rep.final_offers.prices,
            "before": clearing_json(&self.inner, &rep.before),
            "after": clearing_json(&self.inner, &rep.after),
        })
        .to_string())
    }

    /// Post-mitigation profit as the conduct/impact thresholds scale;
    /// returns a JSON list of {fraction, predicted_profit, realized_profit}.
    fn threshold_sweep(&self, strategy: &str, fractions: Vec<f64>) -> PyResult<String> {
        let strategy = Strategy::parse(strategy).map_err(to_py_err)?;
        let points = threshold_sweep(&self.inner, strategy, &fractions).map_err(to_py_err)?;
        let rows: Vec<serde_json::Value> = points
            .iter()
            .map(|p| {
                json!({
                    "fraction": p.fraction,
                    "predicted_profit": p.predicted_profit,
                    "realized_profit": p.realized_profit,
                })
            })
            .collect();
        Ok(serde_json::Value::Array(rows).to_string())
    }

    /// Before/after table for all four strategies as CSV text.
    fn strategy_table(&self) -> PyResult<String> {
        let rows = strategy_comparison(&self.inner).map_err(to_py_err)?;
        Ok(comparison_csv(&self.inner, &rows))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(buses={}, units={}, owner={:?}, load={:.1})",
            self.inner.network.buses.len(),
            self.inner.units.len(),
            self.inner.strategic_owner,
            self.inner.total_load()
        )
    }
}

/// Load a scenario from a JSON file.
#[pyfunction]
fn load_scenario(path: &str) -> PyResult<PyScenario> {
    Ok(PyScenario {
        inner: network::load_scenario(path).map_err(to_py_err)?,
    })
}

/// Parse a scenario from JSON text.
#[pyfunction]
fn scenario_from_json(text: &str) -> PyResult<PyScenario> {
    let inner: network::Scenario =
        serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    inner.validate().map_err(to_py_err)?;
    Ok(PyScenario { inner })
}

/// Names accepted by `Scenario.solve_bid` and `Scenario.threshold_sweep`.
#[pyfunction]
fn strategies() -> Vec<&'static str> {
    Strategy::ALL.iter().map(|s| s.name()).collect()
}

#[pymodule]
fn mitbid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_from_json, m)?)?;
    m.add_function(wrap_pyfunction!(strategies, m)?)?;
    Ok(())
}
