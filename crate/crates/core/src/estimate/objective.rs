//! Least-squares and negative log-likelihood objectives of one location.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LocalLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Ls,
    Ml,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Objective::Ls),
            "ml" => Ok(Objective::Ml),
            other => Err(Error::invalid(format!("unknown objective `{other}`"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Ls => "ls",
            Objective::Ml => "ml",
        })
    }
}

/// Objective of location `k` over aggregated patterns.
pub struct LocalObjective<'a> {
    pub layout: LocalLayout,
    pub objective: Objective,
    pub offsets: &'a [Vec<usize>],
    /// `pattern * (M + 1) + y`.
    pub counts: &'a [f64],
    pub n: f64,
}

impl LocalObjective<'_> {
    fn m(&self) -> usize {
        self.layout.m
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let m = self.m();
        let mut z = vec![0.0; m];
        let mut total = 0.0;
        for (pat, off) in self.offsets.iter().enumerate() {
            let c = &self.counts[pat * (m + 1)..(pat + 1) * (m + 1)];
            let ctot: f64 = c.iter().sum();
            if ctot == 0.0 {
                continue;
            }
            self.layout.eval(x, off, &mut z);
            match self.objective {
                Objective::Ls => {
                    // sum over outcomes y of c_y * |z - onehot(y)|^2
                    let zz: f64 = z.iter().map(|v| v * v).sum();
                    let cross: f64 = z.iter().zip(&c[1..]).map(|(v, cp)| v * cp).sum();
                    let ones: f64 = c[1..].iter().sum();
                    total += ctot * zz - 2.0 * cross + ones;
                }
                Objective::Ml => {
                    for (p, &cp) in c[1..].iter().enumerate() {
                        if cp > 0.0 {
                            total -= cp * checked_ln(z[p])?;
                        }
                    }
                    if c[0] > 0.0 {
                        total -= c[0] * checked_ln(1.0 - z.iter().sum::<f64>())?;
                    }
                }
            }
        }
        Ok(match self.objective {
            Objective::Ls => total / (2.0 * self.n),
            Objective::Ml => total / self.n,
        })
    }

    pub fn gradient(&self, x: &[f64], g: &mut [f64]) -> Result<()> {
        let m = self.m();
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut z = vec![0.0; m];
        let mut dz = vec![0.0; m];
        for (pat, off) in self.offsets.iter().enumerate() {
            let c = &self.counts[pat * (m + 1)..(pat + 1) * (m + 1)];
            let ctot: f64 = c.iter().sum();
            if ctot == 0.0 {
                continue;
            }
            self.layout.eval(x, off, &mut z);
            match self.objective {
                Objective::Ls => {
                    for p in 0..m {
                        dz[p] = (ctot * z[p] - c[p + 1]) / self.n;
                    }
                }
                Objective::Ml => {
                    let rest = 1.0 - z.iter().sum::<f64>();
                    let normal = if c[0] > 0.0 {
                        if rest <= 0.0 {
                            return Err(Error::Domain(format!("normal-state probability {rest} <= 0")));
                        }
                        c[0] / rest
                    } else {
                        0.0
                    };
                    for p in 0..m {
                        let abn = if c[p + 1] > 0.0 {
                            if z[p] <= 0.0 {
                                return Err(Error::Domain(format!("probability {} <= 0", z[p])));
                            }
                            c[p + 1] / z[p]
                        } else {
                            0.0
                        };
                        dz[p] = (normal - abn) / self.n;
                    }
                }
            }
            for p in 0..m {
                g[p] += dz[p];
            }
            for &o in off {
                for p in 0..m {
                    g[o + p] += dz[p];
                }
            }
        }
        Ok(())
    }

    /// `d^T H d` for the least-squares Hessian.
    pub fn ls_curvature(&self, dir: &[f64]) -> f64 {
        let m = self.m();
        let mut z = vec![0.0; m];
        let mut total = 0.0;
        for (pat, off) in self.offsets.iter().enumerate() {
            let ctot: f64 = self.counts[pat * (m + 1)..(pat + 1) * (m + 1)].iter().sum();
            if ctot == 0.0 {
                continue;
            }
            self.layout.eval(dir, off, &mut z);
            total += ctot * z.iter().map(|v| v * v).sum::<f64>();
        }
        total / self.n
    }
}

fn checked_ln(v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v.ln())
    } else {
        Err(Error::Domain(format!("log of non-positive probability {v}")))
    }
}
