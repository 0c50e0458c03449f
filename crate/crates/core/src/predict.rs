//! One-step-ahead prediction with static and dynamic thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, BootstrapResult, FitOptions};
use crate::extract::{EventSequence, FrequencyComparison};
use crate::model::{HistoryBlock, ModelParams};

/// Probabilities of states `1..=M` per location (`K x M`, row-major).
pub fn predict_step(params: &ModelParams, history: &HistoryBlock) -> Result<Vec<f64>> {
    params.probs(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Static,
    Dynamic,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(PolicyKind::Static),
            "dynamic" => Ok(PolicyKind::Dynamic),
            other => Err(Error::invalid(format!("unknown threshold policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub kind: PolicyKind,
    /// `static_tau[k][m - 1]`; also the fallback of the dynamic rule.
    pub static_tau: Vec<Vec<f64>>,
    pub w2: usize,
    pub alpha: f64,
}

impl ThresholdPolicy {
    pub fn constant(kind: PolicyKind, k: usize, m: usize, tau: f64) -> Self {
        ThresholdPolicy {
            kind,
            static_tau: vec![vec![tau; m]; k],
            w2: 50,
            alpha: 0.5,
        }
    }

    fn validate(&self, k: usize, m: usize) -> Result<()> {
        if self.static_tau.len() != k || self.static_tau.iter().any(|t| t.len() != m) {
            return Err(Error::dim("static thresholds do not match K x M"));
        }
        if self
            .static_tau
            .iter()
            .flatten()
            .any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(Error::invalid("thresholds must lie in [0, 1]"));
        }
        if self.w2 == 0 {
            return Err(Error::invalid("w2 must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Convex combination of the mean prediction on abnormal and on normal slots;
/// `fallback` when either class is absent.
pub fn dynamic_tau(past_events: &[u8], past_preds: &[f64], alpha: f64, fallback: f64) -> f64 {
    let (mut sa, mut na, mut sn, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for (&e, &p) in past_events.iter().zip(past_preds) {
        if e != 0 {
            sa += p;
            na += 1;
        } else {
            sn += p;
            nn += 1;
        }
    }
    if na == 0 || nn == 0 {
        return fallback;
    }
    alpha * sa / na as f64 + (1.0 - alpha) * sn / nn as f64
}

/// Boundary threshold between states `i - 1` and `i`:
/// `(i / (M + 1)) * sum_m mean{ p_m : event = m }`. `past_preds` is `w x M`.
pub fn dynamic_tau_multi(past_events: &[u8], past_preds: &[f64], m: usize, i: usize, fallback: f64) -> f64 {
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (t, &e) in past_events.iter().enumerate() {
        if e > 0 {
            let s = e as usize - 1;
            sums[s] += past_preds[t * m + s];
            counts[s] += 1;
        }
    }
    if counts.contains(&0) {
        return fallback;
    }
    let total: f64 = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).sum();
    (i as f64 / (m + 1) as f64 * total).clamp(0.0, 1.0)
}

/// Most probable state among those clearing their own threshold, else 0.
pub fn decide(p_hat: &[f64], tau: &[f64]) -> u8 {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&p, &t)) in p_hat.iter().zip(tau).enumerate() {
        if p >= t && best.is_none_or(|(_, bp)| p > bp) {
            best = Some((i, p));
        }
    }
    best.map_or(0, |(i, _)| (i + 1) as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub tau: f64,
    pub f1: f64,
    /// No positive labels: `tau` is the 0.5 fallback.
    pub degenerate: bool,
}

/// Grid point in `[0, 1]` maximising F1 of `p >= tau` against `truth`,
/// ties going to the smallest threshold.
pub fn tune_static(preds: &[f64], truth: &[bool], grid_size: usize) -> Result<TuneResult> {
    if preds.is_empty() || preds.len() != truth.len() {
        return Err(Error::invalid("tuning needs equally long, nonempty inputs"));
    }
    if grid_size < 2 {
        return Err(Error::invalid("the threshold grid needs at least 2 points"));
    }
    if !truth.iter().any(|&t| t) {
        return Ok(TuneResult {
            tau: 0.5,
            f1: 0.0,
            degenerate: true,
        });
    }
    let mut best = TuneResult {
        tau: 0.0,
        f1: -1.0,
        degenerate: false,
    };
    for g in 0..grid_size {
        let tau = g as f64 / (grid_size - 1) as f64;
        let mut c = Counts::default();
        for (&p, &t) in preds.iter().zip(truth) {
            c.add(p >= tau, t);
        }
        let f1 = c.f1();
        if f1 > best.f1 {
            best = TuneResult {
                tau,
                f1,
                degenerate: false,
            };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both vanish.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub t: usize,
    pub date: chrono::NaiveDate,
    pub k: usize,
    pub location: String,
    /// Probabilities of states `1..=M`.
    pub p_hat: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub tau: Vec<f64>,
    pub decision: u8,
    pub truth: u8,
}

/// Walk days `from..to` (clipped to the usable range), predicting each from
/// the observed history, thresholding and recording the truth.
pub fn run_sequential(
    params: &ModelParams,
    events: &EventSequence,
    policy: &ThresholdPolicy,
    ci: Option<&BootstrapResult>,
    from: usize,
    to: usize,
) -> Result<Vec<PredictionRecord>> {
    let (k, d, m) = (params.k(), params.d(), params.m());
    if events.locations() != k || events.m() != m {
        return Err(Error::dim("events do not match the model"));
    }
    policy.validate(k, m)?;
    params.require_feasible()?;
    if let Some(ci) = ci {
        if ci.se.len() != params.kappa() {
            return Err(Error::dim("bootstrap result does not match the model"));
        }
    }
    let start = from.max(events.valid_from() + d);
    let end = to.min(events.days());
    if start >= end {
        return Err(Error::InsufficientData(format!(
            "no predictable days in {from}..{to} at depth {d}"
        )));
    }
    let lay = params.layout();
    let locals: Vec<Vec<f64>> = (0..k).map(|i| params.local(i)).collect();
    let (lo_flat, hi_flat) = match ci {
        Some(c) => (
            ModelParams::from_flat(k, d, m, params.is_single(), &c.ci_low)?,
            ModelParams::from_flat(k, d, m, params.is_single(), &c.ci_high)?,
        ),
        None => (params.clone(), params.clone()),
    };
    let lo_locals: Vec<Vec<f64>> = (0..k).map(|i| lo_flat.local(i)).collect();
    let hi_locals: Vec<Vec<f64>> = (0..k).map(|i| hi_flat.local(i)).collect();

    let mut records = Vec::with_capacity((end - start) * k);
    // trailing windows per location
    let mut past_events: Vec<Vec<u8>> = vec![Vec::new(); k];
    let mut past_preds: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut h = vec![0u8; d * k];
    let mut offsets = Vec::new();
    for t in start..end {
        HistoryBlock::from_events(events, t, d)?.vec_into(&mut h);
        lay.offsets_into(&h, &mut offsets);
        let truth_row = events.row(t).expect("usable rows are available");
        for loc in 0..k {
            let mut p_hat = vec![0.0; m];
            lay.eval(&locals[loc], &offsets, &mut p_hat);
            let mut ci_low = vec![0.0; m];
            let mut ci_high = vec![0.0; m];
            lay.eval(&lo_locals[loc], &offsets, &mut ci_low);
            lay.eval(&hi_locals[loc], &offsets, &mut ci_high);
            for i in 0..m {
                ci_low[i] = ci_low[i].clamp(0.0, 1.0).min(p_hat[i]);
                ci_high[i] = ci_high[i].clamp(0.0, 1.0).max(p_hat[i]);
            }
            let fallback = &policy.static_tau[loc];
            let tau: Vec<f64> = match policy.kind {
                PolicyKind::Static => fallback.clone(),
                PolicyKind::Dynamic => {
                    let n = past_events[loc].len();
                    if n < policy.w2 {
                        fallback.clone()
                    } else {
                        let ev = &past_events[loc][n - policy.w2..];
                        let pr = &past_preds[loc][(n - policy.w2) * m..];
                        if m == 1 {
                            vec![dynamic_tau(ev, pr, policy.alpha, fallback[0])]
                        } else {
                            (1..=m)
                                .map(|i| dynamic_tau_multi(ev, pr, m, i, fallback[i - 1]))
                                .collect()
                        }
                    }
                }
            };
            let decision = decide(&p_hat, &tau);
            let truth = truth_row[loc];
            past_events[loc].push(truth);
            past_preds[loc].extend_from_slice(&p_hat);
            records.push(PredictionRecord {
                t,
                date: events.date(t),
                k: loc,
                location: events.ids[loc].clone(),
                p_hat,
                ci_low,
                ci_high,
                tau,
                decision,
                truth,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub state: usize,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationFrequency {
    pub location: String,
    pub state: usize,
    pub avg_freq_pred: f64,
    pub avg_freq_true: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: usize,
    pub per_state: Vec<StateMetrics>,
    /// Micro-average over the abnormal states.
    pub micro: StateMetrics,
    pub frequencies: Vec<LocationFrequency>,
}

pub fn evaluate(records: &[PredictionRecord]) -> Result<MetricReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("no records to evaluate"))?;
    let m = first.p_hat.len();
    let mut per = vec![Counts::default(); m];
    for r in records {
        for (s, c) in per.iter_mut().enumerate() {
            let state = (s + 1) as u8;
            c.add(r.decision == state, r.truth == state);
        }
    }
    let metrics = |state: usize, c: Counts| StateMetrics {
        state,
        counts: c,
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
    };
    let total = per.iter().fold(Counts::default(), |a, c| Counts {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    let mut locations: Vec<(usize, String)> = records.iter().map(|r| (r.k, r.location.clone())).collect();
    locations.sort();
    locations.dedup();
    let mut frequencies = Vec::new();
    for (k, id) in &locations {
        let rs: Vec<&PredictionRecord> = records.iter().filter(|r| r.k == *k).collect();
        for s in 1..=m {
            let n = rs.len() as f64;
            frequencies.push(LocationFrequency {
                location: id.clone(),
                state: s,
                avg_freq_pred: rs.iter().filter(|r| r.decision as usize == s).count() as f64 / n,
                avg_freq_true: rs.iter().filter(|r| r.truth as usize == s).count() as f64 / n,
            });
        }
    }
    Ok(MetricReport {
        records: records.len(),
        per_state: per.iter().enumerate().map(|(s, c)| metrics(s + 1, *c)).collect(),
        micro: metrics(0, total),
        frequencies,
    })
}

/// Options of the tune-then-evaluate protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub kind: PolicyKind,
    pub alpha: f64,
    pub w2: usize,
    /// Leading fraction of the stream used for tuning.
    pub tune_split: f64,
    pub grid_size: usize,
    /// Also pick `w2` on the tuning split.
    pub tune_w2: bool,
    /// Use this static threshold everywhere instead of tuning one.
    #[serde(default)]
    pub fixed_tau: Option<f64>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            kind: PolicyKind::Static,
            alpha: 0.5,
            w2: 50,
            tune_split: 0.3,
            grid_size: 25,
            tune_w2: false,
            fixed_tau: None,
        }
    }
}

/// Candidate window lengths from 10 to 110 in 25 steps.
pub fn w2_grid() -> Vec<usize> {
    (0..25).map(|i| (10.0 + i as f64 * 100.0 / 24.0).round() as usize).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub policy: ThresholdPolicy,
    /// First evaluated day index; earlier days were used for tuning.
    pub eval_from: usize,
    pub records: Vec<PredictionRecord>,
    pub metrics: MetricReport,
    pub warnings: Vec<String>,
}

/// Tune static thresholds (and optionally `w2`) on the first `tune_split` of
/// the predictable days, then run the whole stream and score the rest.
/// A `fixed_tau` skips the threshold tuning but keeps the same split.
pub fn predict_pipeline(
    params: &ModelParams,
    events: &EventSequence,
    cfg: &PredictConfig,
    ci: Option<&BootstrapResult>,
) -> Result<PredictionOutcome> {
    if !(cfg.tune_split > 0.0 && cfg.tune_split < 1.0) {
        return Err(Error::invalid(format!("tune split {} outside (0, 1)", cfg.tune_split)));
    }
    let (k, m) = (params.k(), params.m());
    let start = events.valid_from() + params.d();
    let end = events.days();
    if start >= end {
        return Err(Error::InsufficientData("no predictable days".into()));
    }
    let steps = end - start;
    let tune_steps = ((steps as f64 * cfg.tune_split).round() as usize).clamp(1, steps - 1);
    let eval_from = start + tune_steps;
    let mut warnings = Vec::new();

    let mut static_tau = vec![vec![cfg.fixed_tau.unwrap_or(0.5); m]; k];
    if cfg.fixed_tau.is_none() {
        let probe = ThresholdPolicy::constant(PolicyKind::Static, k, m, 0.5);
        let tune_records = run_sequential(params, events, &probe, None, start, eval_from)?;
        for (loc, taus) in static_tau.iter_mut().enumerate() {
            let rs: Vec<&PredictionRecord> = tune_records.iter().filter(|r| r.k == loc).collect();
            for s in 1..=m {
                let preds: Vec<f64> = rs.iter().map(|r| r.p_hat[s - 1]).collect();
                let truth: Vec<bool> = rs.iter().map(|r| r.truth as usize == s).collect();
                let tuned = tune_static(&preds, &truth, cfg.grid_size)?;
                if tuned.degenerate {
                    warnings.push(format!(
                        "location {}: no state-{s} events in the tuning split; threshold set to 0.5",
                        events.ids[loc]
                    ));
                }
                taus[s - 1] = tuned.tau;
            }
        }
    }
    let mut policy = ThresholdPolicy {
        kind: cfg.kind,
        static_tau,
        w2: cfg.w2,
        alpha: cfg.alpha,
    };
    if cfg.tune_w2 && cfg.kind == PolicyKind::Dynamic {
        let mut best = (f64::NEG_INFINITY, cfg.w2);
        for w2 in w2_grid() {
            let trial = ThresholdPolicy { w2, ..policy.clone() };
            let rs = run_sequential(params, events, &trial, None, start, eval_from)?;
            let f1 = evaluate(&rs)?.micro.f1;
            if f1 > best.0 {
                best = (f1, w2);
            }
        }
        policy.w2 = best.1;
    }
    let all = run_sequential(params, events, &policy, ci, start, end)?;
    let records: Vec<PredictionRecord> = all.into_iter().filter(|r| r.t >= eval_from).collect();
    let metrics = evaluate(&records)?;
    Ok(PredictionOutcome {
        policy,
        eval_from,
        records,
        metrics,
        warnings,
    })
}

/// Write records as CSV: date, location, one probability column per state,
/// interval endpoints, thresholds, decision and truth.
pub fn write_records_csv<W: std::io::Write>(records: &[PredictionRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = records.first().map_or(1, |r| r.p_hat.len());
    let mut header = vec!["date".to_string(), "location_id".to_string()];
    for prefix in ["p_hat", "ci_low", "ci_high", "tau"] {
        for s in 1..=m {
            header.push(format!("{prefix}_{s}"));
        }
    }
    header.push("decision".into());
    header.push("truth".into());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.date.to_string(), r.location.clone()];
        for v in [&r.p_hat, &r.ci_low, &r.ci_high, &r.tau] {
            row.extend(v.iter().map(|x| x.to_string()));
        }
        row.push(r.decision.to_string());
        row.push(r.truth.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Fit on the leading `train_frac` of the available days, then compare the
/// mean predicted probability of each state on the remaining days with the
/// observed frequency.
pub fn frequency_comparison(
    events: &EventSequence,
    d: usize,
    opts: &FitOptions,
    train_frac: f64,
) -> Result<Vec<FrequencyComparison>> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let vf = events.valid_from();
    let avail = events.days() - vf;
    let split = vf + ((avail as f64 * train_frac).round() as usize).clamp(d + 1, avail.saturating_sub(1).max(d + 1));
    if split >= events.days() {
        return Err(Error::InsufficientData("no held-out days for the frequency test".into()));
    }
    let train = events.slice_days(0, split)?;
    let report = fit(&train, d, opts)?;
    let (k, m) = (events.locations(), events.m());
    let probe = ThresholdPolicy::constant(PolicyKind::Static, k, m, 0.5);
    let records = run_sequential(&report.params, events, &probe, None, split, events.days())?;
    let mut out = Vec::with_capacity(k * m);
    for loc in 0..k {
        let rs: Vec<&PredictionRecord> = records.iter().filter(|r| r.k == loc).collect();
        let n = rs.len() as f64;
        for s in 1..=m {
            out.push(FrequencyComparison {
                location: events.ids[loc].clone(),
                state: s,
                model: rs.iter().map(|r| r.p_hat[s - 1]).sum::<f64>() / n,
                empirical: rs.iter().filter(|r| r.truth as usize == s).count() as f64 / n,
            });
        }
    }
    Ok(out)
}
