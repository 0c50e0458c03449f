//! Spectral projected gradient for one location.
//!
//! Barzilai-Borwein steps projected onto the feasible set, with an exact
//! line search for the quadratic LS objective and Armijo backtracking for
//! the likelihood. Every accepted iterate is feasible and the objective
//! decreases monotonically.

use serde::{Deserialize, Serialize};

use super::objective::{LocalObjective, Objective};
use super::projection::project;
use crate::error::Result;

const ALPHA_MIN: f64 = 1e-12;
const ALPHA_MAX: f64 = 1e12;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub trace: Vec<f64>,
    /// `|| x - P(x - grad) ||_inf` at the returned point.
    pub stationarity: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Projected step `P(x - t g) - x`.
fn projected_step(obj: &LocalObjective, lo: f64, hi: f64, x: &[f64], g: &[f64], t: f64) -> Vec<f64> {
    let trial: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - t * b).collect();
    let p = project(&obj.layout, lo, hi, &trial);
    p.iter().zip(x).map(|(a, b)| a - b).collect()
}

/// Minimise `obj` over the set with bounds `[lo, hi]` starting from `x0`.
pub fn spg(
    obj: &LocalObjective,
    lo: f64,
    hi: f64,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LocalSolution> {
    let n = x0.len();
    let mut x = project(&obj.layout, lo, hi, x0);
    let mut f = obj.value(&x)?;
    let mut g = vec![0.0; n];
    obj.gradient(&x, &mut g)?;
    let mut trace = vec![f];
    let mut alpha = {
        let pg = projected_step(obj, lo, hi, &x, &g, 1.0);
        let s = inf_norm(&pg);
        if s > 0.0 {
            (1.0 / s).clamp(ALPHA_MIN, ALPHA_MAX)
        } else {
            1.0
        }
    };
    let mut g_new = vec![0.0; n];
    let mut stationarity = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let pg = projected_step(obj, lo, hi, &x, &g, 1.0);
        stationarity = inf_norm(&pg);
        if stationarity <= tol {
            converged = true;
            break;
        }
        let mut dir = projected_step(obj, lo, hi, &x, &g, alpha);
        let mut gd = dot(&g, &dir);
        if !(gd < 0.0) {
            dir = pg;
            gd = dot(&g, &dir);
            if !(gd < 0.0) {
                break;
            }
        }
        let (x_new, f_new) = match obj.objective {
            Objective::Ls => {
                let curv = obj.ls_curvature(&dir);
                let lam = if curv > 0.0 { (-gd / curv).min(1.0) } else { 1.0 };
                let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + lam * b).collect();
                let fv = obj.value(&xn)?;
                (xn, fv)
            }
            Objective::Ml => {
                let mut lam = 1.0;
                let mut accepted = None;
                while lam > 1e-20 {
                    let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + lam * b).collect();
                    if let Ok(fv) = obj.value(&xn) {
                        if fv <= f + ARMIJO * lam * gd {
                            accepted = Some((xn, fv));
                            break;
                        }
                    }
                    lam *= 0.5;
                }
                match accepted {
                    Some(v) => v,
                    // no representable decrease left
                    None => break,
                }
            }
        };
        obj.gradient(&x_new, &mut g_new)?;
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = x_new[i] - x[i];
            ss += s * s;
            sy += s * (g_new[i] - g[i]);
        }
        alpha = if sy > 0.0 {
            (ss / sy).clamp(ALPHA_MIN, ALPHA_MAX)
        } else {
            ALPHA_MAX
        };
        x = x_new;
        f = f_new;
        std::mem::swap(&mut g, &mut g_new);
        trace.push(f);
        iterations += 1;
        if ss == 0.0 {
            break;
        }
    }
    if !converged {
        let pg = projected_step(obj, lo, hi, &x, &g, 1.0);
        stationarity = inf_norm(&pg);
        converged = stationarity <= tol;
    }
    Ok(LocalSolution {
        x,
        objective: f,
        trace,
        stationarity,
        iterations,
        converged,
    })
}
