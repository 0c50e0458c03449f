//! Time-index bootstrap of the fitted parameters.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::data::{usable_range, PatternData};
use super::{solve_all, FitOptions};
use crate::error::{Error, Result};
use crate::extract::EventSequence;
use crate::model::ModelParams;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Family-wise level of the Bonferroni-corrected intervals.
    pub epsilon: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 100,
            seed: 0,
            epsilon: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub requested: usize,
    pub used: usize,
    /// Replicates dropped because a location did not converge.
    pub dropped: usize,
    pub epsilon: f64,
    /// `z_{1 - epsilon / (2 kappa)}`.
    pub z: f64,
    /// Standard errors in the canonical flat order.
    pub se: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

/// Resample usable days with replacement (each keeps its own history), refit
/// `B` times and summarise the spread around `fitted`.
pub fn bootstrap(
    events: &EventSequence,
    d: usize,
    opts: &FitOptions,
    boot: &BootstrapOptions,
    fitted: &ModelParams,
) -> Result<BootstrapResult> {
    if boot.replicates < 2 {
        return Err(Error::invalid("the bootstrap needs at least 2 replicates"));
    }
    if !(boot.epsilon > 0.0 && boot.epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon {} outside (0, 1)", boot.epsilon)));
    }
    let (first, end) = usable_range(events, d)?;
    let steps = end - first;
    let single = fitted.is_single();
    let (k, m) = (fitted.k(), fitted.m());

    let replicates: Vec<Option<Vec<f64>>> = (0..boot.replicates)
        .into_par_iter()
        .map(|b| -> Result<Option<Vec<f64>>> {
            let mut rng = stream_rng(boot.seed, stream::BOOTSTRAP + b as u64);
            let mut weights = vec![0.0; steps];
            for _ in 0..steps {
                weights[rng.random_range(0..steps)] += 1.0;
            }
            let data = PatternData::weighted(events, d, single, Some(&weights))?;
            let sols = solve_all(&data, opts, None)?;
            if sols.iter().any(|s| !s.converged) {
                return Ok(None);
            }
            let locals: Vec<Vec<f64>> = sols.into_iter().map(|s| s.x).collect();
            Ok(Some(ModelParams::from_locals(k, d, m, single, &locals)?.flat()))
        })
        .collect::<Result<Vec<_>>>()?;

    let kept: Vec<&Vec<f64>> = replicates.iter().flatten().collect();
    let used = kept.len();
    if used < 2 {
        return Err(Error::InsufficientData(format!(
            "only {used} of {} bootstrap replicates converged",
            boot.replicates
        )));
    }
    let kappa = fitted.kappa();
    let mut se = vec![0.0; kappa];
    for (i, s) in se.iter_mut().enumerate() {
        let mean = kept.iter().map(|r| r[i]).sum::<f64>() / used as f64;
        let var = kept.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (used - 1) as f64;
        *s = var.sqrt();
    }
    let normal = Normal::standard();
    let z = normal.inverse_cdf(1.0 - boot.epsilon / (2.0 * kappa as f64));
    let beta = fitted.flat();
    Ok(BootstrapResult {
        requested: boot.replicates,
        used,
        dropped: boot.replicates - used,
        epsilon: boot.epsilon,
        z,
        ci_low: beta.iter().zip(&se).map(|(b, s)| b - z * s).collect(),
        ci_high: beta.iter().zip(&se).map(|(b, s)| b + z * s).collect(),
        se,
    })
}
