//! Constrained LS / ML estimation, design-matrix diagnostics, error
//! certificates and the bootstrap.
//!
//! The joint problem separates into one independent sub-problem per
//! location; these are solved in parallel and merged in location order.

mod bootstrap;
mod data;
mod design;
mod objective;
mod projection;
mod solver;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap, BootstrapOptions, BootstrapResult};
pub use data::{usable_range, PatternData};
pub use design::{
    bound_value, design_matrix, error_bound, theta_1, theta_2, theta_inf, BoundMethod, Certificate,
    ConditionNumbers, DesignMatrix, ErrorBound, Norm,
};
pub use objective::{LocalObjective, Objective};
pub use projection::project;
pub use solver::{spg, LocalSolution};

use crate::error::{Error, Result};
use crate::extract::EventSequence;
use crate::model::{ModelParams, ParamsDocument};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub objective: Objective,
    /// Stationarity tolerance; defaults to 1e-8 (LS) or 1e-6 (ML).
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Margin of the strengthened set used by ML.
    pub rho: f64,
    /// Confidence level of the reported error bounds.
    pub epsilon: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            objective: Objective::Ls,
            tol: None,
            max_iter: 50_000,
            rho: 1e-3,
            epsilon: 0.1,
        }
    }
}

impl FitOptions {
    pub fn with_objective(objective: Objective) -> Self {
        FitOptions {
            objective,
            ..FitOptions::default()
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.tol.unwrap_or(match self.objective {
            Objective::Ls => 1e-8,
            Objective::Ml => 1e-6,
        })
    }

    /// Constraint bounds `(lo, hi)` used by the solver.
    pub fn bounds(&self) -> (f64, f64) {
        match self.objective {
            Objective::Ls => (0.0, 1.0),
            Objective::Ml => (self.rho, 1.0 - self.rho),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.objective == Objective::Ml && !(self.rho > 0.0 && self.rho < 1.0 / (m + 1) as f64) {
            return Err(Error::invalid(format!(
                "rho {} must lie in (0, 1/(M+1)) for M = {m}",
                self.rho
            )));
        }
        if !(self.tolerance() > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("tolerance and max_iter must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        Ok(())
    }
}

/// Per-location solver outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocationFit {
    pub location: String,
    pub objective: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub objective_kind: Objective,
    pub options: FitOptions,
    pub locations: Vec<String>,
    pub params: ModelParams,
    /// Usable steps `N`.
    pub n: f64,
    pub kappa: usize,
    /// Joint objective at the estimate (sum over locations).
    pub objective: f64,
    pub final_gradient_norm: f64,
    pub converged: bool,
    pub per_location: Vec<LocationFit>,
    pub design: Option<DesignMatrix>,
    pub thetas: Option<ConditionNumbers>,
    pub bounds: Vec<ErrorBound>,
    pub bootstrap: Option<BootstrapResult>,
    pub warnings: Vec<String>,
}

impl FitReport {
    /// JSON summary: embedded params document, thetas, bounds and trace summary.
    pub fn to_json(&self) -> serde_json::Value {
        let traces: Vec<serde_json::Value> = self
            .per_location
            .iter()
            .map(|l| {
                serde_json::json!({
                    "location": l.location,
                    "iterations": l.iterations,
                    "objective": l.objective,
                    "initial_objective": l.trace.first(),
                    "stationarity": l.stationarity,
                    "converged": l.converged,
                })
            })
            .collect();
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "objective_kind": self.objective_kind,
            "options": self.options,
            "n": self.n,
            "kappa": self.kappa,
            "objective": self.objective,
            "final_gradient_norm": self.final_gradient_norm,
            "converged": self.converged,
            "params": ParamsDocument::from_params(&self.params, Some(self.locations.clone())),
            "thetas": self.thetas,
            "bounds": self.bounds,
            "trace_summary": traces,
            "bootstrap": self.bootstrap,
            "warnings": self.warnings,
        })
    }
}

/// Solve every location's sub-problem on prepared statistics.
pub(crate) fn solve_all(
    data: &PatternData,
    opts: &FitOptions,
    start: Option<&[Vec<f64>]>,
) -> Result<Vec<LocalSolution>> {
    let (lo, hi) = opts.bounds();
    let tol = opts.tolerance();
    (0..data.k)
        .into_par_iter()
        .map(|k| {
            let obj = LocalObjective {
                layout: data.layout,
                objective: opts.objective,
                offsets: &data.offsets,
                counts: &data.counts[k],
                n: data.n,
            };
            let x0 = match start {
                Some(s) => s[k].clone(),
                None => data.layout.center(),
            };
            spg(&obj, lo, hi, &x0, tol, opts.max_iter)
        })
        .collect()
}

/// Fit the model of depth `d` to `events` (single-state when `M = 1`).
pub fn fit(events: &EventSequence, d: usize, opts: &FitOptions) -> Result<FitReport> {
    let m = events.m();
    opts.validate(m)?;
    let single = m == 1;
    let data = PatternData::new(events, d, single)?;
    let solutions = solve_all(&data, opts, None)?;
    let k = events.locations();
    let locals: Vec<Vec<f64>> = solutions.iter().map(|s| s.x.clone()).collect();
    let params = ModelParams::from_locals(k, d, m, single, &locals)?;
    let kappa = params.kappa();

    let mut warnings = Vec::new();
    let per_location: Vec<LocationFit> = solutions
        .into_iter()
        .zip(&events.ids)
        .map(|(s, id)| {
            if !s.converged {
                warnings.push(format!(
                    "location {id}: not converged after {} iterations (stationarity {:.3e})",
                    s.iterations, s.stationarity
                ));
            }
            LocationFit {
                location: id.clone(),
                objective: s.objective,
                iterations: s.iterations,
                stationarity: s.stationarity,
                converged: s.converged,
                trace: s.trace,
            }
        })
        .collect();
    let converged = per_location.iter().all(|l| l.converged);
    let objective = per_location.iter().map(|l| l.objective).sum();
    let final_gradient_norm = per_location.iter().map(|l| l.stationarity).fold(0.0, f64::max);

    let (design, thetas, bounds) = if single {
        let dm = DesignMatrix::from_patterns(&data)?;
        let th = ConditionNumbers::of_design(&dm);
        let method = match opts.objective {
            Objective::Ls => BoundMethod::Ls,
            Objective::Ml => BoundMethod::Ml { rho: opts.rho },
        };
        let bounds = [Norm::One, Norm::Two, Norm::Inf]
            .into_iter()
            .map(|p| error_bound(&th, p, kappa, data.n, opts.epsilon, method))
            .collect::<Result<Vec<_>>>()?;
        (Some(dm), Some(th), bounds)
    } else {
        (None, None, Vec::new())
    };

    Ok(FitReport {
        objective_kind: opts.objective,
        options: *opts,
        locations: events.ids.clone(),
        params,
        n: data.n,
        kappa,
        objective,
        final_gradient_norm,
        converged,
        per_location,
        design,
        thetas,
        bounds,
        bootstrap: None,
        warnings,
    })
}

fn check_shape(params: &ModelParams, events: &EventSequence) -> Result<PatternData> {
    if params.k() != events.locations() || params.m() != events.m() {
        return Err(Error::dim(format!(
            "parameters for K={}, M={} do not match events with K={}, M={}",
            params.k(),
            params.m(),
            events.locations(),
            events.m()
        )));
    }
    PatternData::new(events, params.d(), params.is_single())
}

fn joint_value(params: &ModelParams, events: &EventSequence, objective: Objective) -> Result<f64> {
    let data = check_shape(params, events)?;
    let mut total = 0.0;
    for k in 0..data.k {
        let obj = LocalObjective {
            layout: data.layout,
            objective,
            offsets: &data.offsets,
            counts: &data.counts[k],
            n: data.n,
        };
        total += obj.value(&params.local(k))?;
    }
    Ok(total)
}

/// `(1/2N) sum_t sum_k |p_tk - onehot(omega_tk)|^2`.
pub fn ls_objective(params: &ModelParams, events: &EventSequence) -> Result<f64> {
    joint_value(params, events, Objective::Ls)
}

/// Averaged negative log-likelihood.
pub fn ml_objective(params: &ModelParams, events: &EventSequence) -> Result<f64> {
    joint_value(params, events, Objective::Ml)
}

fn joint_gradient(params: &ModelParams, events: &EventSequence, objective: Objective) -> Result<Vec<f64>> {
    let data = check_shape(params, events)?;
    let mut flat = vec![0.0; params.kappa()];
    let mut g = vec![0.0; data.layout.n_vars()];
    for k in 0..data.k {
        let obj = LocalObjective {
            layout: data.layout,
            objective,
            offsets: &data.offsets,
            counts: &data.counts[k],
            n: data.n,
        };
        obj.gradient(&params.local(k), &mut g)?;
        for (i, v) in g.iter().enumerate() {
            flat[params.flat_index(k, i)] = *v;
        }
    }
    Ok(flat)
}

/// Gradient of [`ml_objective`] in the canonical flat order.
pub fn ml_gradient(params: &ModelParams, events: &EventSequence) -> Result<Vec<f64>> {
    joint_gradient(params, events, Objective::Ml)
}

/// Gradient of [`ls_objective`], i.e. the empirical regret `F(beta)`.
pub fn ls_gradient(params: &ModelParams, events: &EventSequence) -> Result<Vec<f64>> {
    joint_gradient(params, events, Objective::Ls)
}

pub(crate) mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
