//! Parameterisation of the spatio-temporal Bernoulli / categorical model.
//!
//! The probability of state `p` at location `k` on day `t` is affine in the
//! parameters: a birthrate plus one interaction term per (lag, location)
//! pair of the recent history. Everything is stored in a canonical flat
//! order (birthrates first, then the interaction block of each location
//! with histories vectorised column by column) that the estimator, the
//! design matrix and the JSON documents all share.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{default_ids, default_start, EventSequence};
use crate::rng::{stream, stream_rng};
use crate::SCHEMA_VERSION;

/// Slack below zero that still counts as feasible.
pub const FEAS_TOL: f64 = 1e-9;

/// The `d x K` block of past states; row `s - 1` holds lag `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryBlock {
    d: usize,
    k: usize,
    states: Vec<u8>,
}

impl HistoryBlock {
    pub fn new(d: usize, k: usize, states: Vec<u8>) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::dim("history needs d >= 1 and K >= 1"));
        }
        if states.len() != d * k {
            return Err(Error::dim(format!(
                "history of {} entries is not {d} x {k}",
                states.len()
            )));
        }
        Ok(HistoryBlock { d, k, states })
    }

    pub fn zeros(d: usize, k: usize) -> Self {
        HistoryBlock {
            d,
            k,
            states: vec![0; d * k],
        }
    }

    /// Observed days `t - d .. t` of `events`.
    pub fn from_events(events: &EventSequence, t: usize, d: usize) -> Result<Self> {
        if t < d || t - d < events.valid_from() || t > events.days() {
            return Err(Error::InsufficientHistory { t, needed: d });
        }
        let k = events.locations();
        let mut states = Vec::with_capacity(d * k);
        for s in 1..=d {
            states.extend_from_slice(events.row(t - s).expect("checked availability"));
        }
        Ok(HistoryBlock { d, k, states })
    }

    pub fn depth(&self) -> usize {
        self.d
    }

    pub fn locations(&self) -> usize {
        self.k
    }

    /// State of location `l` at lag `s` (1-based lag).
    pub fn get(&self, s: usize, l: usize) -> u8 {
        self.states[(s - 1) * self.k + l]
    }

    pub fn rows(&self) -> &[u8] {
        &self.states
    }

    /// Column-stacked vectorisation: entry `l * d + (s - 1)`.
    pub fn vec(&self) -> Vec<u8> {
        let mut v = vec![0; self.d * self.k];
        self.vec_into(&mut v);
        v
    }

    pub(crate) fn vec_into(&self, out: &mut [u8]) {
        for s in 1..=self.d {
            for l in 0..self.k {
                out[l * self.d + s - 1] = self.get(s, l);
            }
        }
    }

    /// Shift in a new most-recent row.
    pub fn push(&mut self, row: &[u8]) {
        self.states.copy_within(0..(self.d - 1) * self.k, self.k);
        self.states[..self.k].copy_from_slice(row);
    }
}

/// Shape of one location's sub-problem: `m` states and `j = d K` history features.
///
/// Single-state layout: `[beta, b_0 .. b_{J-1}]`, where `b_j` multiplies the
/// binary history entry `j`. Multi-state layout: `beta(p)` at `p - 1`, then
/// `b_j(p, q)` at `m + (j (m + 1) + q) m + (p - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalLayout {
    pub m: usize,
    pub j: usize,
    pub single: bool,
}

impl LocalLayout {
    pub fn single(j: usize) -> Self {
        LocalLayout { m: 1, j, single: true }
    }

    pub fn multi(m: usize, j: usize) -> Self {
        LocalLayout { m, j, single: false }
    }

    pub fn n_vars(&self) -> usize {
        if self.single {
            1 + self.j
        } else {
            self.m + self.j * (self.m + 1) * self.m
        }
    }

    /// Start index of the block of `m` coefficients for feature `j` in state `q`.
    pub fn block(&self, j: usize, q: usize) -> usize {
        if self.single {
            1 + j
        } else {
            self.m + (j * (self.m + 1) + q) * self.m
        }
    }

    /// Blocks that contribute to the probabilities under vectorised history `h`.
    pub fn offsets_into(&self, h: &[u8], out: &mut Vec<usize>) {
        out.clear();
        if self.single {
            out.extend(h.iter().enumerate().filter(|(_, &v)| v != 0).map(|(j, _)| 1 + j));
        } else {
            out.extend(h.iter().enumerate().map(|(j, &q)| self.block(j, q as usize)));
        }
    }

    /// `z[p-1]` = probability of state `p`, for `p = 1..=m`.
    pub fn eval(&self, x: &[f64], offsets: &[usize], z: &mut [f64]) {
        z.copy_from_slice(&x[..self.m]);
        for &o in offsets {
            for (zp, xp) in z.iter_mut().zip(&x[o..o + self.m]) {
                *zp += xp;
            }
        }
    }

    /// Left-hand sides of the lower constraints, one per state.
    pub fn lower(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x[..self.m].to_vec();
        if self.single {
            out[0] += x[1..].iter().map(|&b| b.min(0.0)).sum::<f64>();
        } else {
            for j in 0..self.j {
                for (p, o) in out.iter_mut().enumerate() {
                    let mn = (0..=self.m)
                        .map(|q| x[self.block(j, q) + p])
                        .fold(f64::INFINITY, f64::min);
                    *o += mn;
                }
            }
        }
        out
    }

    /// Left-hand side of the upper constraint.
    pub fn upper(&self, x: &[f64]) -> f64 {
        if self.single {
            x[0] + x[1..].iter().map(|&b| b.max(0.0)).sum::<f64>()
        } else {
            let mut total: f64 = x[..self.m].iter().sum();
            for j in 0..self.j {
                total += (0..=self.m)
                    .map(|q| x[self.block(j, q)..self.block(j, q) + self.m].iter().sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            total
        }
    }

    /// Centre of the feasible set: equal birthrates, no interactions.
    pub fn center(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars()];
        for v in &mut x[..self.m] {
            *v = 1.0 / (self.m + 1) as f64;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStateParams {
    pub k: usize,
    pub d: usize,
    /// `beta_k`.
    pub birthrate: Vec<f64>,
    /// `beta^s_kl` at `((s - 1) K + k) K + l`.
    pub interaction: Vec<f64>,
}

impl SingleStateParams {
    pub fn new(k: usize, d: usize, birthrate: Vec<f64>, interaction: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::dim("K and d must be at least 1"));
        }
        if birthrate.len() != k || interaction.len() != d * k * k {
            return Err(Error::dim(format!(
                "expected {k} birthrates and {} interactions, got {} and {}",
                d * k * k,
                birthrate.len(),
                interaction.len()
            )));
        }
        Ok(SingleStateParams {
            k,
            d,
            birthrate,
            interaction,
        })
    }

    pub fn zeros(k: usize, d: usize) -> Self {
        SingleStateParams {
            k,
            d,
            birthrate: vec![0.0; k],
            interaction: vec![0.0; d * k * k],
        }
    }

    /// `beta^s_kl`, lag `s` 1-based.
    pub fn get(&self, s: usize, k: usize, l: usize) -> f64 {
        self.interaction[((s - 1) * self.k + k) * self.k + l]
    }

    pub fn set(&mut self, s: usize, k: usize, l: usize, v: f64) {
        self.interaction[((s - 1) * self.k + k) * self.k + l] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStateParams {
    pub k: usize,
    pub d: usize,
    pub m: usize,
    /// `beta_k(p)` at `k M + (p - 1)`.
    pub birthrate: Vec<f64>,
    /// `beta^s_kl(p, q)` at `(((s - 1) K + k) K + l) M (M + 1) + (p - 1)(M + 1) + q`.
    pub interaction: Vec<f64>,
}

impl MultiStateParams {
    pub fn new(
        k: usize,
        d: usize,
        m: usize,
        birthrate: Vec<f64>,
        interaction: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || d == 0 || m == 0 {
            return Err(Error::dim("K, d and M must be at least 1"));
        }
        let ni = d * k * k * m * (m + 1);
        if birthrate.len() != k * m || interaction.len() != ni {
            return Err(Error::dim(format!(
                "expected {} birthrates and {ni} interactions, got {} and {}",
                k * m,
                birthrate.len(),
                interaction.len()
            )));
        }
        Ok(MultiStateParams {
            k,
            d,
            m,
            birthrate,
            interaction,
        })
    }

    pub fn zeros(k: usize, d: usize, m: usize) -> Self {
        MultiStateParams {
            k,
            d,
            m,
            birthrate: vec![0.0; k * m],
            interaction: vec![0.0; d * k * k * m * (m + 1)],
        }
    }

    fn idx(&self, s: usize, k: usize, l: usize, p: usize, q: usize) -> usize {
        (((s - 1) * self.k + k) * self.k + l) * self.m * (self.m + 1) + (p - 1) * (self.m + 1) + q
    }

    /// `beta^s_kl(p, q)`; `s` and `p` 1-based, `q` in `0..=M`.
    pub fn get(&self, s: usize, k: usize, l: usize, p: usize, q: usize) -> f64 {
        self.interaction[self.idx(s, k, l, p, q)]
    }

    pub fn set(&mut self, s: usize, k: usize, l: usize, p: usize, q: usize, v: f64) {
        let i = self.idx(s, k, l, p, q);
        self.interaction[i] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Single(SingleStateParams),
    Multi(MultiStateParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Lower,
    Upper,
}

/// One evaluated inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub location: usize,
    pub kind: BoundKind,
    /// State `p` for lower bounds (always 1 in the single-state model).
    pub state: Option<usize>,
    pub value: f64,
    pub limit: f64,
    /// `value - limit` for lower bounds, `limit - value` for upper bounds.
    pub slack: f64,
}

impl fmt::Display for Slack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BoundKind::Lower => write!(
                f,
                "location {} state {}: lower constraint {:.6} >= {:.6} violated by {:.3e}",
                self.location,
                self.state.unwrap_or(1),
                self.value,
                self.limit,
                -self.slack
            ),
            BoundKind::Upper => write!(
                f,
                "location {}: upper constraint {:.6} <= {:.6} violated by {:.3e}",
                self.location, self.value, self.limit, -self.slack
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub rho: f64,
    /// Tightest inequality per location.
    pub worst: Vec<Slack>,
    pub violations: Vec<Slack>,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        match self {
            ModelParams::Single(p) => p.k,
            ModelParams::Multi(p) => p.k,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            ModelParams::Single(p) => p.d,
            ModelParams::Multi(p) => p.d,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            ModelParams::Single(_) => 1,
            ModelParams::Multi(p) => p.m,
        }
    }

    pub fn is_single(&self) -> bool {
        matches!(self, ModelParams::Single(_))
    }

    /// Zero parameters of the given shape; `single` selects the Bernoulli model.
    pub fn zeros(k: usize, d: usize, m: usize, single: bool) -> Self {
        if single {
            ModelParams::Single(SingleStateParams::zeros(k, d))
        } else {
            ModelParams::Multi(MultiStateParams::zeros(k, d, m))
        }
    }

    pub fn layout(&self) -> LocalLayout {
        let j = self.d() * self.k();
        match self {
            ModelParams::Single(_) => LocalLayout::single(j),
            ModelParams::Multi(p) => LocalLayout::multi(p.m, j),
        }
    }

    /// Number of free parameters.
    pub fn kappa(&self) -> usize {
        self.k() * self.layout().n_vars()
    }

    /// Sub-problem vector of location `k` in the [`LocalLayout`] order.
    pub fn local(&self, k: usize) -> Vec<f64> {
        let lay = self.layout();
        let mut x = vec![0.0; lay.n_vars()];
        let d = self.d();
        match self {
            ModelParams::Single(p) => {
                x[0] = p.birthrate[k];
                for l in 0..p.k {
                    for s in 1..=d {
                        x[1 + l * d + s - 1] = p.get(s, k, l);
                    }
                }
            }
            ModelParams::Multi(p) => {
                x[..p.m].copy_from_slice(&p.birthrate[k * p.m..(k + 1) * p.m]);
                for l in 0..p.k {
                    for s in 1..=d {
                        let j = l * d + s - 1;
                        for q in 0..=p.m {
                            for pp in 1..=p.m {
                                x[lay.block(j, q) + pp - 1] = p.get(s, k, l, pp, q);
                            }
                        }
                    }
                }
            }
        }
        x
    }

    pub fn set_local(&mut self, k: usize, x: &[f64]) {
        let lay = self.layout();
        let d = self.d();
        match self {
            ModelParams::Single(p) => {
                p.birthrate[k] = x[0];
                for l in 0..p.k {
                    for s in 1..=d {
                        p.set(s, k, l, x[1 + l * d + s - 1]);
                    }
                }
            }
            ModelParams::Multi(p) => {
                let m = p.m;
                p.birthrate[k * m..(k + 1) * m].copy_from_slice(&x[..m]);
                for l in 0..p.k {
                    for s in 1..=d {
                        let j = l * d + s - 1;
                        for q in 0..=m {
                            for pp in 1..=m {
                                p.set(s, k, l, pp, q, x[lay.block(j, q) + pp - 1]);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Assemble from per-location vectors.
    pub fn from_locals(k: usize, d: usize, m: usize, single: bool, locals: &[Vec<f64>]) -> Result<Self> {
        let mut params = ModelParams::zeros(k, d, m, single);
        let n = params.layout().n_vars();
        if locals.len() != k || locals.iter().any(|x| x.len() != n) {
            return Err(Error::dim("local vectors do not match the model shape"));
        }
        for (i, x) in locals.iter().enumerate() {
            params.set_local(i, x);
        }
        Ok(params)
    }

    /// Canonical flat vector: all birthrates, then each location's interaction block.
    pub fn flat(&self) -> Vec<f64> {
        let m = self.m();
        let mut out = Vec::with_capacity(self.kappa());
        let locals: Vec<Vec<f64>> = (0..self.k()).map(|k| self.local(k)).collect();
        for x in &locals {
            out.extend_from_slice(&x[..m]);
        }
        for x in &locals {
            out.extend_from_slice(&x[m..]);
        }
        out
    }

    pub fn from_flat(k: usize, d: usize, m: usize, single: bool, flat: &[f64]) -> Result<Self> {
        let shape = ModelParams::zeros(k, d, m, single);
        let m = shape.m();
        let n = shape.layout().n_vars();
        if flat.len() != k * n {
            return Err(Error::dim(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                k * n
            )));
        }
        let block = n - m;
        let locals: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let mut x = flat[i * m..(i + 1) * m].to_vec();
                x.extend_from_slice(&flat[k * m + i * block..k * m + (i + 1) * block]);
                x
            })
            .collect();
        ModelParams::from_locals(k, d, m, single, &locals)
    }

    /// Position of local coordinate `i` of location `k` in the flat vector.
    pub fn flat_index(&self, k: usize, i: usize) -> usize {
        let m = self.m();
        let n = self.layout().n_vars();
        if i < m {
            k * m + i
        } else {
            self.k() * m + k * (n - m) + (i - m)
        }
    }

    /// Evaluate every inequality of the feasible set tightened by `rho`.
    pub fn check_feasible(&self, rho: Option<f64>) -> FeasibilityReport {
        let rho = rho.unwrap_or(0.0);
        let lay = self.layout();
        let mut worst = Vec::with_capacity(self.k());
        let mut violations = Vec::new();
        for k in 0..self.k() {
            let x = self.local(k);
            let mut slacks: Vec<Slack> = lay
                .lower(&x)
                .into_iter()
                .enumerate()
                .map(|(p, v)| Slack {
                    location: k,
                    kind: BoundKind::Lower,
                    state: Some(p + 1),
                    value: v,
                    limit: rho,
                    slack: v - rho,
                })
                .collect();
            let up = lay.upper(&x);
            slacks.push(Slack {
                location: k,
                kind: BoundKind::Upper,
                state: None,
                value: up,
                limit: 1.0 - rho,
                slack: 1.0 - rho - up,
            });
            for s in &slacks {
                if s.slack < -FEAS_TOL || !s.slack.is_finite() {
                    violations.push(s.clone());
                }
            }
            let w = slacks
                .into_iter()
                .min_by(|a, b| a.slack.total_cmp(&b.slack))
                .expect("at least two inequalities");
            worst.push(w);
        }
        FeasibilityReport {
            feasible: violations.is_empty(),
            rho,
            worst,
            violations,
        }
    }

    pub(crate) fn require_feasible(&self) -> Result<()> {
        let report = self.check_feasible(None);
        if report.feasible {
            Ok(())
        } else {
            let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Infeasible(list.join("; ")))
        }
    }

    /// Probabilities of states `1..=M` at every location, `K x M` row-major,
    /// without a feasibility check.
    pub fn probs_unchecked(&self, history: &HistoryBlock) -> Result<Vec<f64>> {
        if history.depth() != self.d() || history.locations() != self.k() {
            return Err(Error::dim(format!(
                "history is {} x {}, model expects {} x {}",
                history.depth(),
                history.locations(),
                self.d(),
                self.k()
            )));
        }
        let lay = self.layout();
        let m = self.m();
        let h = history.vec();
        if let Some(&bad) = h.iter().find(|&&q| q as usize > m) {
            return Err(Error::invalid(format!("history state {bad} exceeds M = {m}")));
        }
        let mut offsets = Vec::new();
        lay.offsets_into(&h, &mut offsets);
        let mut out = vec![0.0; self.k() * m];
        for k in 0..self.k() {
            let x = self.local(k);
            lay.eval(&x, &offsets, &mut out[k * m..(k + 1) * m]);
        }
        Ok(out)
    }

    /// Checked one-step probabilities of states `1..=M`, `K x M` row-major.
    pub fn probs(&self, history: &HistoryBlock) -> Result<Vec<f64>> {
        self.require_feasible()?;
        self.probs_unchecked(history)
    }
}

/// Linear-model probabilities of an abnormal event at each location.
pub fn cond_prob_single(params: &SingleStateParams, history: &HistoryBlock) -> Result<Vec<f64>> {
    if history.rows().iter().any(|&v| v > 1) {
        return Err(Error::invalid("single-state history must be binary"));
    }
    ModelParams::Single(params.clone()).probs(history)
}

/// `K x (M + 1)` row-major matrix; column 0 is the normal state.
pub fn cond_prob_multi(params: &MultiStateParams, history: &HistoryBlock) -> Result<Vec<f64>> {
    let m = params.m;
    let p = ModelParams::Multi(params.clone()).probs(history)?;
    let mut out = Vec::with_capacity(params.k * (m + 1));
    for row in p.chunks(m) {
        out.push(1.0 - row.iter().sum::<f64>());
        out.extend_from_slice(row);
    }
    Ok(out)
}

/// Regressor matrix `[I_K, I_K (x) vec(h)^T]` of the single-state model.
pub fn feature_map(history: &HistoryBlock) -> Result<DMatrix<f64>> {
    if history.rows().iter().any(|&v| v > 1) {
        return Err(Error::invalid("feature map needs a binary history"));
    }
    let k = history.locations();
    let j = history.depth() * k;
    let h = history.vec();
    let mut eta = DMatrix::zeros(k, k + k * j);
    for r in 0..k {
        eta[(r, r)] = 1.0;
        for (c, &v) in h.iter().enumerate() {
            eta[(r, k + r * j + c)] = v as f64;
        }
    }
    Ok(eta)
}

/// Random point with every inequality holding with at least `margin` slack.
pub fn random_feasible<R: Rng>(
    k: usize,
    d: usize,
    m: usize,
    single: bool,
    margin: f64,
    rng: &mut R,
) -> ModelParams {
    let mut params = ModelParams::zeros(k, d, m, single);
    let lay = params.layout();
    let mm = lay.m;
    for loc in 0..k {
        let mut x = vec![0.0; lay.n_vars()];
        // birthrates leave room for the margin on both sides
        let room = 1.0 - 2.0 * margin;
        let raw: Vec<f64> = (0..mm).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum::<f64>() / rng.random_range(0.3..0.95);
        for p in 0..mm {
            x[p] = margin + room * raw[p] / total;
        }
        for v in &mut x[mm..] {
            *v = rng.random_range(-1.0..1.0);
        }
        let base = x[..mm].to_vec();
        let mut probe = x.clone();
        probe[..mm].iter_mut().for_each(|v| *v = 0.0);
        let neg = lay.lower(&probe);
        let pos = lay.upper(&probe);
        let mut scale: f64 = 1.0;
        for p in 0..mm {
            if neg[p] < 0.0 {
                scale = scale.min((base[p] - margin) / -neg[p]);
            }
        }
        let head = 1.0 - margin - base.iter().sum::<f64>();
        if pos > 0.0 {
            scale = scale.min(head / pos);
        }
        scale *= rng.random_range(0.2..1.0);
        for v in &mut x[mm..] {
            *v *= scale;
        }
        params.set_local(loc, &x);
    }
    params
}

/// Forward-sample `days` steps with locations independent given the history.
pub fn simulate(
    params: &ModelParams,
    days: usize,
    seed: u64,
    init: Option<&HistoryBlock>,
) -> Result<EventSequence> {
    params.require_feasible()?;
    if days == 0 {
        return Err(Error::invalid("simulate needs at least one day"));
    }
    let (k, d, m) = (params.k(), params.d(), params.m());
    let mut history = match init {
        Some(h) => {
            if h.depth() != d || h.locations() != k {
                return Err(Error::dim("initial history does not match the model"));
            }
            h.clone()
        }
        None => HistoryBlock::zeros(d, k),
    };
    let lay = params.layout();
    let locals: Vec<Vec<f64>> = (0..k).map(|i| params.local(i)).collect();
    let mut rng = stream_rng(seed, stream::SIMULATE);
    let mut states = Vec::with_capacity(days * k);
    let mut h = vec![0u8; d * k];
    let mut offsets = Vec::new();
    let mut z = vec![0.0; m];
    let mut row = vec![0u8; k];
    for _ in 0..days {
        history.vec_into(&mut h);
        lay.offsets_into(&h, &mut offsets);
        for (loc, x) in locals.iter().enumerate() {
            lay.eval(x, &offsets, &mut z);
            let u: f64 = rng.random();
            let mut cum = 0.0;
            row[loc] = 0;
            for (p, zp) in z.iter().enumerate() {
                cum += zp;
                if u < cum {
                    row[loc] = (p + 1) as u8;
                    break;
                }
            }
        }
        states.extend_from_slice(&row);
        history.push(&row);
    }
    EventSequence::new(default_ids(k), default_start(), m, days, 0, states)
}

/// JSON form of a parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub schema_version: u32,
    pub kind: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<Vec<String>>,
    pub flat: Vec<f64>,
    /// `birthrate[k][p - 1]`.
    pub birthrate: Vec<Vec<f64>>,
    /// Single-state: `[s-1][k][l]`; multi-state: `[s-1][k][l][p-1][q]`.
    pub interaction: serde_json::Value,
}

impl ParamsDocument {
    pub fn from_params(params: &ModelParams, locations: Option<Vec<String>>) -> Self {
        let (k, d, m) = (params.k(), params.d(), params.m());
        let interaction = match params {
            ModelParams::Single(p) => serde_json::json!((1..=d)
                .map(|s| (0..k)
                    .map(|kk| (0..k).map(|l| p.get(s, kk, l)).collect::<Vec<_>>())
                    .collect::<Vec<_>>())
                .collect::<Vec<_>>()),
            ModelParams::Multi(p) => serde_json::json!((1..=d)
                .map(|s| (0..k)
                    .map(|kk| (0..k)
                        .map(|l| (1..=m)
                            .map(|pp| (0..=m).map(|q| p.get(s, kk, l, pp, q)).collect::<Vec<_>>())
                            .collect::<Vec<_>>())
                        .collect::<Vec<_>>())
                    .collect::<Vec<_>>())
                .collect::<Vec<_>>()),
        };
        let birthrate = match params {
            ModelParams::Single(p) => p.birthrate.iter().map(|&b| vec![b]).collect(),
            ModelParams::Multi(p) => p.birthrate.chunks(m).map(<[f64]>::to_vec).collect(),
        };
        ParamsDocument {
            schema_version: SCHEMA_VERSION,
            kind: if params.is_single() { "single" } else { "multi" }.into(),
            k,
            d,
            m,
            locations,
            flat: params.flat(),
            birthrate,
            interaction,
        }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        let single = match self.kind.as_str() {
            "single" => true,
            "multi" => false,
            other => return Err(Error::Format(format!("unknown parameter kind `{other}`"))),
        };
        if let Some(ids) = &self.locations {
            if ids.len() != self.k {
                return Err(Error::Format("location list does not match K".into()));
            }
        }
        ModelParams::from_flat(self.k, self.d, self.m, single, &self.flat)
    }
}
