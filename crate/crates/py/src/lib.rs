//! Python bindings. Structured results (parameters, fit reports) travel as
//! JSON strings in the same formats the CLI writes.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ramping::estimate::{bound_value, BoundMethod, ConditionNumbers};
use ramping::extract::{extract_events, ExtractMode, ExtractionConfig};
use ramping::ingest::{RadiationSeries, SensorMeta};
use ramping::model::{HistoryBlock, ModelParams, ParamsDocument};
use ramping::{EventSequence, FitOptions, Objective};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn params_from_json(text: &str) -> PyResult<ModelParams> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(err)?;
    let doc = value.get("params").cloned().unwrap_or(value);
    let doc: ParamsDocument = serde_json::from_value(doc).map_err(err)?;
    doc.to_params().map_err(err)
}

fn events_from_rows(rows: &[Vec<u8>], m: usize) -> PyResult<EventSequence> {
    let k = rows.first().map_or(0, Vec::len);
    if k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("events must be a non-empty rectangular list of rows"));
    }
    EventSequence::from_rows(m, k, rows.concat()).map_err(err)
}

/// Simulate `days` rows of event states from a params (or fit report) JSON.
#[pyfunction]
#[pyo3(signature = (params, days, seed=0))]
pub fn simulate(params: &str, days: usize, seed: u64) -> PyResult<Vec<Vec<u8>>> {
    let p = params_from_json(params)?;
    let ev = ramping::model::simulate(&p, days, seed, None).map_err(err)?;
    Ok((0..days).map(|t| ev.row(t).unwrap().to_vec()).collect())
}

/// Conditional probabilities of states 1..M per location (K x M, row-major)
/// given the last `d` rows, most recent first.
#[pyfunction]
pub fn cond_prob(params: &str, history: Vec<Vec<u8>>) -> PyResult<Vec<f64>> {
    let p = params_from_json(params)?;
    let h = HistoryBlock::new(p.d(), p.k(), history.concat()).map_err(err)?;
    p.probs(&h).map_err(err)
}

/// Fit the model to rows of event states; returns the fit report as JSON.
#[pyfunction]
#[pyo3(signature = (events, d, objective="ls", states=1, rho=1e-3, epsilon=0.1))]
pub fn fit(events: Vec<Vec<u8>>, d: usize, objective: &str, states: usize, rho: f64, epsilon: f64) -> PyResult<String> {
    let ev = events_from_rows(&events, states)?;
    let opts = FitOptions {
        rho,
        epsilon,
        ..FitOptions::with_objective(objective.parse::<Objective>().map_err(err)?)
    };
    let report = ramping::fit(&ev, d, &opts).map_err(err)?;
    serde_json::to_string(&report.to_json()).map_err(err)
}

/// Event states for one location's readings (`n` per day); `None` for the
/// first `w1` days.
#[pyfunction]
#[pyo3(signature = (values, n, w1=30, delta=0.0005, frac=0.5, states=1, mode="intra-day"))]
pub fn extract(values: Vec<f64>, n: usize, w1: usize, delta: f64, frac: f64, states: usize, mode: &str) -> PyResult<Vec<Option<u8>>> {
    let meta = SensorMeta::new("py", 0.0, 0.0).map_err(err)?;
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    let series = RadiationSeries::new(meta, start, n, values, None).map_err(err)?;
    let cfg = ExtractionConfig {
        w1,
        delta,
        frac,
        states,
        mode: mode.parse::<ExtractMode>().map_err(err)?,
    };
    let ev = extract_events(&series, &cfg).map_err(err)?;
    Ok((0..ev.days()).map(|t| ev.state(t, 0)).collect())
}

/// (theta_1 lower bound, theta_2, theta_inf) of a symmetric PSD matrix.
#[pyfunction]
pub fn condition_numbers(matrix: Vec<Vec<f64>>) -> PyResult<(f64, f64, f64)> {
    let n = matrix.len();
    if n == 0 || matrix.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square and non-empty"));
    }
    let a = DMatrix::from_row_slice(n, n, &matrix.concat());
    let t = ConditionNumbers::of_matrix(&a);
    Ok((t.theta_1, t.theta_2, t.theta_inf))
}

/// Error bound from condition numbers; `method` is "ls" or "ml".
#[pyfunction]
#[pyo3(signature = (theta_p, theta_1, kappa, n, epsilon=0.1, method="ls", rho=1e-3))]
pub fn error_bound(theta_p: f64, theta_1: f64, kappa: usize, n: f64, epsilon: f64, method: &str, rho: f64) -> PyResult<f64> {
    let method = match method {
        "ls" => BoundMethod::Ls,
        "ml" => BoundMethod::Ml { rho },
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    bound_value(theta_p, theta_1, kappa, n, epsilon, method).map_err(err)
}

#[pyfunction]
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ramping::predict::f1_score(precision, recall)
}

#[pymodule]
fn pyramping(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(cond_prob, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(condition_numbers, m)?)?;
    m.add_function(wrap_pyfunction!(error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add("SCHEMA_VERSION", ramping::SCHEMA_VERSION)?;
    Ok(())
}
