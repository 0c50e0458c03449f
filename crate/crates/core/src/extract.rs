//! Ramping-event extraction.
//!
//! A day is abnormal when enough of its readings fall strictly outside the
//! `delta` / `1 - delta` quantile band of the preceding `w1` days.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{daily_average, DateRange, Dataset, RadiationSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractMode {
    #[default]
    IntraDay,
    DailyAverage,
}

impl std::str::FromStr for ExtractMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intra-day" => Ok(ExtractMode::IntraDay),
            "daily-average" => Ok(ExtractMode::DailyAverage),
            other => Err(Error::invalid(format!("unknown extraction mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ExtractMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExtractMode::IntraDay => "intra-day",
            ExtractMode::DailyAverage => "daily-average",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub w1: usize,
    pub delta: f64,
    /// Fraction of a day's readings that must sit outside the band.
    pub frac: f64,
    /// 1 (abnormal or not) or 2 (high / low).
    pub states: usize,
    pub mode: ExtractMode,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            w1: 30,
            delta: 0.0005,
            frac: 0.5,
            states: 1,
            mode: ExtractMode::IntraDay,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w1 == 0 {
            return Err(Error::invalid("w1 must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::invalid(format!("delta {} outside (0, 0.5)", self.delta)));
        }
        if !(self.frac > 0.0 && self.frac <= 1.0) {
            return Err(Error::invalid(format!("frac {} outside (0, 1]", self.frac)));
        }
        if self.states != 1 && self.states != 2 {
            return Err(Error::invalid(format!("states must be 1 or 2, got {}", self.states)));
        }
        Ok(())
    }

    /// `key=value` pairs recorded in output headers.
    pub fn header_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("w1".into(), self.w1.to_string()),
            ("delta".into(), self.delta.to_string()),
            ("frac".into(), self.frac.to_string()),
            ("states".into(), self.states.to_string()),
            ("mode".into(), self.mode.to_string()),
        ]
    }
}

/// Day-by-location matrix of event states. Rows before `valid_from` are
/// unavailable and have no stored state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSequence {
    pub ids: Vec<String>,
    pub start_date: NaiveDate,
    m: usize,
    days: usize,
    valid_from: usize,
    states: Vec<u8>,
}

impl EventSequence {
    /// `states` holds rows `valid_from..days`, row-major over locations.
    pub fn new(
        ids: Vec<String>,
        start_date: NaiveDate,
        m: usize,
        days: usize,
        valid_from: usize,
        states: Vec<u8>,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("an event sequence needs at least one location"));
        }
        if m == 0 || m > 254 {
            return Err(Error::invalid(format!("state count {m} out of range")));
        }
        if valid_from > days {
            return Err(Error::invalid("valid_from exceeds the number of days"));
        }
        if states.len() != (days - valid_from) * ids.len() {
            return Err(Error::dim(format!(
                "{} states for {} available days and {} locations",
                states.len(),
                days - valid_from,
                ids.len()
            )));
        }
        if let Some(&s) = states.iter().find(|&&s| s as usize > m) {
            return Err(Error::invalid(format!("state {s} exceeds M = {m}")));
        }
        Ok(EventSequence {
            ids,
            start_date,
            m,
            days,
            valid_from,
            states,
        })
    }

    /// Fully available sequence with default ids `L1..LK`.
    pub fn from_rows(m: usize, k: usize, states: Vec<u8>) -> Result<Self> {
        if k == 0 || !states.len().is_multiple_of(k) {
            return Err(Error::dim("states do not form whole rows"));
        }
        let days = states.len() / k;
        EventSequence::new(default_ids(k), default_start(), m, days, 0, states)
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn locations(&self) -> usize {
        self.ids.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn valid_from(&self) -> usize {
        self.valid_from
    }

    pub fn date(&self, t: usize) -> NaiveDate {
        self.start_date + Duration::days(t as i64)
    }

    pub fn state(&self, t: usize, k: usize) -> Option<u8> {
        self.row(t).map(|r| r[k])
    }

    pub fn row(&self, t: usize) -> Option<&[u8]> {
        if t < self.valid_from || t >= self.days {
            return None;
        }
        let kk = self.locations();
        let i = (t - self.valid_from) * kk;
        Some(&self.states[i..i + kk])
    }

    /// All available rows, row-major.
    pub fn available(&self) -> &[u8] {
        &self.states
    }

    /// Days `lo..hi` as a new sequence.
    pub fn slice_days(&self, lo: usize, hi: usize) -> Result<EventSequence> {
        if lo >= hi || hi > self.days {
            return Err(Error::invalid(format!("day range {lo}..{hi} out of bounds")));
        }
        let kk = self.locations();
        let vf = self.valid_from.clamp(lo, hi);
        let a = vf.saturating_sub(self.valid_from) * kk;
        let b = (hi.max(self.valid_from) - self.valid_from) * kk;
        EventSequence::new(
            self.ids.clone(),
            self.date(lo),
            self.m,
            hi - lo,
            vf - lo,
            self.states[a..b].to_vec(),
        )
    }

    pub fn slice_dates(&self, range: DateRange) -> Result<EventSequence> {
        let (lo, hi) = range
            .day_indices(self.start_date, self.days)
            .ok_or(Error::EmptySlice {
                start: range.start,
                end: range.end,
            })?;
        self.slice_days(lo, hi)
    }

    /// Collapse every non-zero state to 1.
    pub fn merged(&self) -> EventSequence {
        EventSequence {
            m: 1,
            states: self.states.iter().map(|&s| (s > 0) as u8).collect(),
            ..self.clone()
        }
    }

    /// Count of each state per location over available days.
    pub fn state_counts(&self) -> Vec<Vec<usize>> {
        let kk = self.locations();
        let mut counts = vec![vec![0usize; self.m + 1]; kk];
        for row in self.states.chunks(kk) {
            for (k, &s) in row.iter().enumerate() {
                counts[k][s as usize] += 1;
            }
        }
        counts
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: &[(String, String)]) -> Result<()> {
        for (k, v) in header {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "# m={}", self.m)?;
        writeln!(out, "date,location_id,state")?;
        for t in 0..self.days {
            let date = self.date(t);
            for (k, id) in self.ids.iter().enumerate() {
                match self.state(t, k) {
                    Some(s) => writeln!(out, "{date},{id},{s}")?,
                    None => writeln!(out, "{date},{id},NA")?,
                }
            }
        }
        Ok(())
    }

    /// Parse the CSV written by [`EventSequence::write_csv`]; returns the header pairs too.
    pub fn read_csv<R: Read>(input: R) -> Result<(EventSequence, BTreeMap<String, String>)> {
        let reader = BufReader::new(input);
        let mut header = BTreeMap::new();
        let mut ids: Vec<String> = Vec::new();
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut cells: Vec<Option<u8>> = Vec::new();
        let mut saw_columns = false;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let row = i + 1;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !saw_columns {
                if line.trim() != "date,location_id,state" {
                    return Err(Error::Format(format!("unexpected event header `{line}`")));
                }
                saw_columns = true;
                continue;
            }
            let mut parts = line.split(',');
            let (Some(d), Some(id), Some(s), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse {
                    row,
                    msg: "expected three fields".into(),
                });
            };
            let date = NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| Error::Parse {
                row,
                msg: format!("bad date `{d}`"),
            })?;
            if dates.last() != Some(&date) {
                if let Some(last) = dates.last() {
                    if date != *last + Duration::days(1) {
                        return Err(Error::Parse {
                            row,
                            msg: format!("dates must be consecutive; {date} follows {last}"),
                        });
                    }
                }
                dates.push(date);
            }
            let t = dates.len() - 1;
            if t == 0 {
                ids.push(id.to_string());
            } else {
                let k = cells.len() - t * ids.len();
                if ids.get(k).map(String::as_str) != Some(id) {
                    return Err(Error::Parse {
                        row,
                        msg: format!("location `{id}` out of order"),
                    });
                }
            }
            let state = if s == "NA" {
                None
            } else {
                Some(s.parse::<u8>().map_err(|_| Error::Parse {
                    row,
                    msg: format!("bad state `{s}`"),
                })?)
            };
            cells.push(state);
        }
        if dates.is_empty() || ids.is_empty() || cells.len() != dates.len() * ids.len() {
            return Err(Error::Format("event file has no complete rows".into()));
        }
        let kk = ids.len();
        let valid_from = cells
            .chunks(kk)
            .position(|r| r.iter().all(Option::is_some))
            .unwrap_or(dates.len());
        let mut states = Vec::with_capacity(cells.len());
        for (t, row) in cells.chunks(kk).enumerate() {
            for c in row {
                match (t >= valid_from, c) {
                    (true, Some(s)) => states.push(*s),
                    (false, None) => {}
                    _ => {
                        return Err(Error::Format(format!(
                            "day {} mixes available and NA states",
                            dates[t]
                        )))
                    }
                }
            }
        }
        let max_state = states.iter().copied().max().unwrap_or(0) as usize;
        let m = match header.get("m") {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Format(format!("bad m header `{v}`")))?,
            None => max_state.max(1),
        };
        let seq = EventSequence::new(ids, dates[0], m, dates.len(), valid_from, states)?;
        Ok((seq, header))
    }
}

pub(crate) fn default_ids(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("L{i}")).collect()
}

pub(crate) fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()
}

/// The `w1 * n` readings of days `t - w1 .. t`, in time order.
pub fn history_window(series: &RadiationSeries, t: usize, w1: usize) -> Result<&[f64]> {
    if t < w1 || t > series.days() {
        return Err(Error::InsufficientHistory { t, needed: w1 });
    }
    Ok(&series.values[(t - w1) * series.n..t * series.n])
}

fn rank(q: f64, m: usize) -> usize {
    // guard against products like 0.95 * 100 = 95.00000000000001
    let r = (q * m as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(m)
}

/// Ceiling-rank `delta` and `1 - delta` order statistics.
pub fn quantile_pair(window: &[f64], delta: f64) -> Result<(f64, f64)> {
    if window.is_empty() {
        return Err(Error::invalid("quantile of an empty window"));
    }
    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile_pair(&sorted, delta))
}

fn sorted_quantile_pair(sorted: &[f64], delta: f64) -> (f64, f64) {
    let m = sorted.len();
    (sorted[rank(delta, m) - 1], sorted[rank(1.0 - delta, m) - 1])
}

/// Classify one day given its readings and the band.
fn classify(day: &[f64], low: f64, high: f64, frac: f64, states: usize) -> u8 {
    let n = day.len() as f64;
    let above = day.iter().filter(|&&v| v > high).count() as f64 / n;
    let below = day.iter().filter(|&&v| v < low).count() as f64 / n;
    let hit = |f: f64| f >= frac - 1e-12;
    if states == 1 {
        (hit(above) || hit(below)) as u8
    } else if hit(above) {
        1
    } else if hit(below) {
        2
    } else {
        0
    }
}

/// Events for a single location.
pub fn extract_events(series: &RadiationSeries, cfg: &ExtractionConfig) -> Result<EventSequence> {
    cfg.validate()?;
    let averaged;
    let series = match cfg.mode {
        ExtractMode::IntraDay => series,
        ExtractMode::DailyAverage => {
            averaged = daily_average(series);
            &averaged
        }
    };
    let days = series.days();
    if days <= cfg.w1 {
        return Err(Error::InsufficientHistory {
            t: days,
            needed: cfg.w1,
        });
    }
    let mut states = Vec::with_capacity(days - cfg.w1);
    let mut sorted = Vec::with_capacity(cfg.w1 * series.n);
    for t in cfg.w1..days {
        sorted.clear();
        sorted.extend_from_slice(history_window(series, t, cfg.w1)?);
        sorted.sort_by(f64::total_cmp);
        let (low, high) = sorted_quantile_pair(&sorted, cfg.delta);
        states.push(classify(series.day(t), low, high, cfg.frac, cfg.states));
    }
    EventSequence::new(
        vec![series.meta.id.clone()],
        series.start_date,
        cfg.states,
        days,
        cfg.w1,
        states,
    )
}

/// Extract every location (in parallel) and interleave into one sequence.
pub fn extract_dataset(dataset: &Dataset, cfg: &ExtractionConfig) -> Result<EventSequence> {
    let columns: Result<Vec<EventSequence>> = dataset
        .series
        .par_iter()
        .map(|s| extract_events(s, cfg))
        .collect();
    let columns = columns?;
    let kk = columns.len();
    let first = &columns[0];
    let rows = first.days() - first.valid_from();
    let mut states = vec![0u8; rows * kk];
    for (k, col) in columns.iter().enumerate() {
        for (i, &s) in col.available().iter().enumerate() {
            states[i * kk + k] = s;
        }
    }
    EventSequence::new(
        dataset.ids(),
        first.start_date,
        cfg.states,
        first.days(),
        first.valid_from(),
        states,
    )
}

/// Model-implied versus empirical event frequency for one location and state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyComparison {
    pub location: String,
    pub state: usize,
    pub model: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub mse: f64,
    /// Extraction produced no events at all; excluded from the argmin.
    pub degenerate: bool,
    pub events: usize,
    pub comparisons: Vec<FrequencyComparison>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub best_delta: Option<f64>,
}

/// Run extraction for each `delta` in `grid` and score it with `evaluator`,
/// which returns per-location frequency comparisons for an event sequence.
pub fn delta_sweep<F>(
    dataset: &Dataset,
    base: &ExtractionConfig,
    grid: &[f64],
    evaluator: F,
) -> Result<SweepReport>
where
    F: Fn(&EventSequence) -> Result<Vec<FrequencyComparison>>,
{
    if grid.is_empty() {
        return Err(Error::invalid("delta grid is empty"));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &delta in grid {
        let cfg = ExtractionConfig { delta, ..*base };
        let events = extract_dataset(dataset, &cfg)?;
        let count = events.available().iter().filter(|&&s| s > 0).count();
        let comparisons = evaluator(&events)?;
        let mse = if comparisons.is_empty() {
            0.0
        } else {
            comparisons
                .iter()
                .map(|c| (c.model - c.empirical).powi(2))
                .sum::<f64>()
                / comparisons.len() as f64
        };
        points.push(SweepPoint {
            delta,
            mse,
            degenerate: count == 0,
            events: count,
            comparisons,
        });
    }
    let best_delta = points
        .iter()
        .filter(|p| !p.degenerate)
        .min_by(|a, b| a.mse.total_cmp(&b.mse))
        .map(|p| p.delta);
    Ok(SweepReport { points, best_delta })
}
