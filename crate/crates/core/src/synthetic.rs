//! Synthetic irradiance with planted ramping days, for end-to-end checks.

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::EventSequence;
use crate::ingest::{Dataset, RadiationSeries, SensorMeta};
use crate::model::{simulate, HistoryBlock, ModelParams};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub days: usize,
    /// Readings per day.
    pub n: usize,
    /// Typical GHI level in W/m².
    pub base: f64,
    /// Relative half-width of the uniform reading noise.
    pub noise: f64,
    /// Range of the relative jump on a planted day.
    pub jump: (f64, f64),
    /// Relative amplitude of a yearly swing in the birthrates (0 keeps the
    /// planted process stationary).
    pub seasonality: f64,
    pub start: NaiveDate,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            days: 730,
            n: 12,
            base: 500.0,
            noise: 0.03,
            jump: (0.3, 0.5),
            seasonality: 0.0,
            start: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Planted states: 1 for a high day, 2 for a low day.
    pub planted: EventSequence,
}

/// Plant abnormal days drawn from `params` (a single-state model) and give
/// each a random direction, then render flat noisy days around them.
pub fn planted_dataset(params: &ModelParams, cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    if !params.is_single() {
        return Err(Error::invalid("planting uses a single-state model"));
    }
    if cfg.n == 0 || cfg.days == 0 || !(cfg.base > 0.0) || !(cfg.noise >= 0.0 && cfg.noise < 1.0) {
        return Err(Error::invalid("bad synthetic configuration"));
    }
    let k = params.k();
    let abnormal = if cfg.seasonality == 0.0 {
        simulate(params, cfg.days, seed, None)?
    } else {
        seasonal_simulate(params, cfg.days, cfg.seasonality, seed)?
    };
    let mut rng = stream_rng(seed, stream::SYNTHETIC);
    let ids: Vec<String> = (1..=k).map(|i| format!("S{i}")).collect();
    let mut planted = Vec::with_capacity(cfg.days * k);
    let mut values = vec![Vec::with_capacity(cfg.days * cfg.n); k];
    for t in 0..cfg.days {
        let row = abnormal.row(t).expect("simulated rows are available");
        for loc in 0..k {
            let level = cfg.base * (1.0 + 0.1 * loc as f64);
            let state = if row[loc] == 1 {
                if rng.random_bool(0.5) {
                    1
                } else {
                    2
                }
            } else {
                0
            };
            let factor = match state {
                1 => 1.0 + rng.random_range(cfg.jump.0..=cfg.jump.1),
                2 => 1.0 - rng.random_range(cfg.jump.0..=cfg.jump.1),
                _ => 1.0,
            };
            for _ in 0..cfg.n {
                let u: f64 = rng.random_range(-1.0..=1.0);
                values[loc].push((level * factor * (1.0 + cfg.noise * u)).max(0.0));
            }
            planted.push(state);
        }
    }
    let series = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let meta = SensorMeta::new(ids[i].clone(), 33.0 + i as f64 * 0.25, -84.0 - i as f64 * 0.25)?;
            RadiationSeries::new(meta, cfg.start, cfg.n, v, None)
        })
        .collect::<Result<Vec<_>>>()?;
    let planted = EventSequence::new(ids, cfg.start, 2, cfg.days, 0, planted)?;
    Ok(SyntheticData {
        dataset: Dataset::new(series)?,
        planted,
    })
}

/// Like `simulate`, but birthrates are scaled by `1 + a sin(2πt/365)` and
/// probabilities clipped to [0, 1].
fn seasonal_simulate(params: &ModelParams, days: usize, a: f64, seed: u64) -> Result<EventSequence> {
    let ModelParams::Single(p) = params else {
        return Err(Error::invalid("planting uses a single-state model"));
    };
    let (k, d) = (p.k, p.d);
    let mut rng = stream_rng(seed, stream::SIMULATE);
    let mut hist = HistoryBlock::zeros(d, k);
    let mut states = Vec::with_capacity(days * k);
    for t in 0..days {
        let scale = 1.0 + a * (2.0 * std::f64::consts::PI * t as f64 / 365.0).sin();
        let mut row = vec![0u8; k];
        for (i, r) in row.iter_mut().enumerate() {
            let mut prob = scale * p.birthrate[i];
            for s in 1..=d {
                for l in 0..k {
                    prob += p.get(s, i, l) * f64::from(hist.get(s, l));
                }
            }
            *r = u8::from(rng.random_bool(prob.clamp(0.0, 1.0)));
        }
        hist.push(&row);
        states.extend_from_slice(&row);
    }
    EventSequence::new(
        (1..=k).map(|i| format!("S{i}")).collect(),
        NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
        1,
        days,
        0,
        states,
    )
}

/// Write a series as an NSRDB-style CSV (metadata block plus header), with
/// readings spread evenly over the day.
pub fn write_nsrdb_csv<W: std::io::Write>(series: &RadiationSeries, mut out: W) -> Result<()> {
    use chrono::Datelike;
    writeln!(out, "Source,Location ID,City,State,Country,Latitude,Longitude,Time Zone")?;
    writeln!(
        out,
        "NSRDB,{},-,-,-,{},{},0",
        series.meta.id, series.meta.latitude, series.meta.longitude
    )?;
    writeln!(out, "Year,Month,Day,Hour,Minute,GHI")?;
    let step = 24 * 60 / series.n;
    for t in 0..series.days() {
        let date = series.date(t);
        for (i, v) in series.day(t).iter().enumerate() {
            let minutes = i * step;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                date.year(),
                date.month(),
                date.day(),
                minutes / 60,
                minutes % 60,
                v
            )?;
        }
    }
    Ok(())
}
