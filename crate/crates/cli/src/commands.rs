use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use ramping::estimate::{
    bootstrap, bound_value, BootstrapOptions, BootstrapResult, BoundMethod, Certificate,
    ConditionNumbers, DesignMatrix, Norm,
};
use ramping::extract::{delta_sweep, extract_dataset};
use ramping::ingest::{load_manifest, read_dataset_csv, seasonal_slice, Manifest, SensorMeta};
use ramping::model::{simulate, ParamsDocument};
use ramping::predict::{frequency_comparison, predict_pipeline, write_records_csv, PredictConfig};
use ramping::{
    fit, Dataset, DateRange, Error, EventSequence, ExtractionConfig, FitOptions, FitReport,
    GraphExport, ModelParams, Result, SCHEMA_VERSION,
};

use crate::config::{require, Hasher, Settings};

/// What a command reports back to `main`.
pub enum Outcome {
    Done,
    /// Outputs were written but some solver did not converge.
    NotConverged(String),
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Tag a JSON object with the schema version and config hash.
fn stamp(mut value: Value, hash: &str) -> Value {
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
        map.insert("config_hash".into(), json!(hash));
    }
    value
}

fn parse_or<T: std::str::FromStr<Err = Error>>(v: &Option<String>, default: T) -> Result<T> {
    v.as_deref().map_or(Ok(default), str::parse)
}

fn extraction(s: &Settings) -> Result<ExtractionConfig> {
    let d = ExtractionConfig::default();
    let cfg = ExtractionConfig {
        w1: s.w1.unwrap_or(d.w1),
        delta: s.delta.unwrap_or(d.delta),
        frac: s.frac.unwrap_or(d.frac),
        states: s.states.unwrap_or(d.states),
        mode: parse_or(&s.mode, d.mode)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn fit_options(s: &Settings) -> Result<FitOptions> {
    let d = FitOptions::default();
    Ok(FitOptions {
        objective: parse_or(&s.objective, d.objective)?,
        tol: s.tol.or(d.tol),
        max_iter: s.max_iter.unwrap_or(d.max_iter),
        rho: s.rho.unwrap_or(d.rho),
        epsilon: s.epsilon.unwrap_or(d.epsilon),
    })
}

fn depth(s: &Settings) -> Result<usize> {
    match s.d.unwrap_or(10) {
        0 => Err(Error::InvalidArgument("d must be at least 1".into())),
        d => Ok(d),
    }
}

fn load_dataset(s: &Settings, hasher: &mut Hasher) -> Result<Dataset> {
    let dataset = match (&s.manifest, &s.data) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument("give either --manifest or --data, not both".into()))
        }
        (Some(_), None) => {
            let path = require(&s.manifest, "manifest")?;
            hasher.file(path)?;
            let text = std::fs::read_to_string(path)?;
            let manifest: Manifest =
                toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            for entry in &manifest.location {
                let file = base.join(&entry.file);
                if !file.exists() {
                    return Err(Error::InvalidArgument(format!("{} does not exist", file.display())));
                }
                hasher.file(&file)?;
            }
            load_manifest(path)?
        }
        (None, _) => {
            let path = require(&s.data, "data")?;
            hasher.file(path)?;
            read_dataset_csv(File::open(path)?)?
        }
    };
    match &s.range {
        Some(r) => seasonal_slice(&dataset, DateRange::parse(r)?),
        None => Ok(dataset),
    }
}

fn load_events(s: &Settings, hasher: &mut Hasher) -> Result<EventSequence> {
    let path = require(&s.events, "events")?;
    hasher.file(path)?;
    let (events, _) = EventSequence::read_csv(File::open(path)?)?;
    match &s.range {
        Some(r) => events.slice_dates(DateRange::parse(r)?),
        None => Ok(events),
    }
}

/// Parameters and, for a fit report, its bootstrap result.
fn load_params(s: &Settings, hasher: &mut Hasher) -> Result<(ModelParams, Option<Vec<String>>, Option<BootstrapResult>)> {
    let path = require(&s.params, "params")?;
    hasher.file(path)?;
    let value: Value = serde_json::from_reader(File::open(path)?)?;
    let (doc, boot) = match value.get("params") {
        Some(p) => {
            let boot = match value.get("bootstrap") {
                Some(Value::Null) | None => None,
                Some(b) => Some(serde_json::from_value::<BootstrapResult>(b.clone())?),
            };
            (serde_json::from_value::<ParamsDocument>(p.clone())?, boot)
        }
        None => (serde_json::from_value::<ParamsDocument>(value)?, None),
    };
    Ok((doc.to_params()?, doc.locations.clone(), boot))
}

fn header(cfg_pairs: Vec<(String, String)>, hash: &str) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("schema_version".to_string(), SCHEMA_VERSION.to_string()),
        ("config_hash".to_string(), hash.to_string()),
    ];
    pairs.extend(cfg_pairs);
    pairs
}

fn write_events(path: &Path, events: &EventSequence, pairs: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    events.write_csv(&mut w, pairs)?;
    w.flush()?;
    Ok(())
}

pub fn extract(s: &Settings) -> Result<Outcome> {
    let cfg = extraction(s)?;
    #[derive(Serialize)]
    struct Effective<'a> {
        extraction: ExtractionConfig,
        range: &'a Option<String>,
    }
    let mut hasher = Hasher::new("extract", &Effective { extraction: cfg, range: &s.range });
    let dataset = load_dataset(s, &mut hasher)?;
    let hash = hasher.finish();
    let events = extract_dataset(&dataset, &cfg)?;
    let out = s.out_dir()?.join("events.csv");
    write_events(&out, &events, &header(cfg.header_pairs(), &hash))?;
    let counts = events.state_counts();
    for (id, c) in events.ids.iter().zip(&counts) {
        eprintln!("{id}: state counts {c:?}");
    }
    eprintln!("wrote {}", out.display());
    Ok(Outcome::Done)
}

pub fn simulate_cmd(s: &Settings) -> Result<Outcome> {
    let days = s.days.unwrap_or(365);
    let seed = s.seed.unwrap_or(0);
    if days == 0 {
        return Err(Error::InvalidArgument("days must be at least 1".into()));
    }
    let mut hasher = Hasher::new("simulate", &json!({ "days": days, "seed": seed }));
    let (params, ids, _) = load_params(s, &mut hasher)?;
    let hash = hasher.finish();
    let mut events = simulate(&params, days, seed, None)?;
    if let Some(ids) = ids {
        if ids.len() == events.ids.len() {
            events.ids = ids;
        }
    }
    let pairs = header(
        vec![("seed".into(), seed.to_string()), ("days".into(), days.to_string())],
        &hash,
    );
    let out = s.out_dir()?.join("events.csv");
    write_events(&out, &events, &pairs)?;
    for (id, c) in events.ids.iter().zip(events.state_counts()) {
        eprintln!("{id}: state counts {c:?}");
    }
    eprintln!("wrote {}", out.display());
    Ok(Outcome::Done)
}

/// Sensor coordinates from a manifest, read without loading the data files.
fn manifest_meta(s: &Settings) -> Result<Option<Vec<SensorMeta>>> {
    let Some(path) = &s.manifest else { return Ok(None) };
    let text = std::fs::read_to_string(path)?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    manifest
        .location
        .iter()
        .map(|e| SensorMeta::new(e.id.clone(), e.latitude, e.longitude))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn fit_one(
    events: &EventSequence,
    d: usize,
    opts: &FitOptions,
    boot: Option<BootstrapOptions>,
) -> Result<FitReport> {
    let mut report = fit(events, d, opts)?;
    if let Some(b) = boot {
        let result = bootstrap(events, d, opts, &b, &report.params)?;
        if result.dropped > 0 {
            report.warnings.push(format!(
                "bootstrap: {} of {} replicates dropped (not converged)",
                result.dropped, result.requested
            ));
        }
        report.bootstrap = Some(result);
    }
    Ok(report)
}

fn report_json(report: &FitReport, hash: &str, effective: &Value, season: Option<&str>) -> Value {
    let mut v = stamp(report.to_json(), hash);
    if let Value::Object(map) = &mut v {
        map.insert("config".into(), effective.clone());
        if let Some(range) = season {
            map.insert("season".into(), json!(range));
        }
    }
    v
}

pub fn fit_cmd(s: &Settings) -> Result<Outcome> {
    let d = depth(s)?;
    let opts = fit_options(s)?;
    let replicates = s.bootstrap.unwrap_or(0);
    let seed = s.seed.unwrap_or(0);
    let boot = (replicates > 0).then(|| BootstrapOptions {
        replicates,
        seed,
        epsilon: s.ci_epsilon.unwrap_or(BootstrapOptions::default().epsilon),
    });
    let seasons: Vec<DateRange> = s
        .seasons
        .iter()
        .flatten()
        .map(|r| DateRange::parse(r))
        .collect::<Result<_>>()?;
    let effective = json!({
        "d": d,
        "options": opts,
        "bootstrap": boot,
        "range": s.range,
        "seasons": seasons.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
    });
    let mut hasher = Hasher::new("fit", &effective);
    let events = load_events(s, &mut hasher)?;
    let hash = hasher.finish();
    let meta = manifest_meta(s)?;
    let out = s.out_dir()?;

    let mut unconverged = Vec::new();
    let mut emit = |report: &FitReport, suffix: &str, season: Option<&str>| -> Result<()> {
        write_json(&out.join(format!("fit_report{suffix}.json")), &report_json(report, &hash, &effective, season))?;
        let doc = ParamsDocument::from_params(&report.params, Some(report.locations.clone()));
        write_json(&out.join(format!("params{suffix}.json")), &stamp(serde_json::to_value(doc)?, &hash))?;
        let graph = GraphExport::from_params(&report.params, &report.locations, meta.as_deref());
        write_json(&out.join(format!("graph{suffix}.json")), &stamp(serde_json::to_value(graph)?, &hash))?;
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
        if !report.converged {
            unconverged.push(season.unwrap_or("full range").to_string());
        }
        eprintln!(
            "fit{}: objective {:.6e}, N = {}, kappa = {}, stationarity {:.2e}",
            season.map(|r| format!(" {r}")).unwrap_or_default(),
            report.objective,
            report.n,
            report.kappa,
            report.final_gradient_norm
        );
        for b in &report.bounds {
            eprintln!("  bound ({:?} norm): {}", b.p, b.value);
        }
        Ok(())
    };

    let report = fit_one(&events, d, &opts, boot)?;
    emit(&report, "", None)?;
    for range in &seasons {
        let part = events.slice_dates(*range)?;
        let report = fit_one(&part, d, &opts, boot)?;
        let label = format!(".{}_{}", range.start, range.end);
        emit(&report, &label, Some(&range.to_string()))?;
    }
    eprintln!("wrote reports to {}", out.display());
    if unconverged.is_empty() {
        Ok(Outcome::Done)
    } else {
        Ok(Outcome::NotConverged(format!("solver did not converge for {}", unconverged.join(", "))))
    }
}

pub fn predict_cmd(s: &Settings) -> Result<Outcome> {
    let d = PredictConfig::default();
    let cfg = PredictConfig {
        kind: parse_or(&s.policy, d.kind)?,
        alpha: s.alpha.unwrap_or(d.alpha),
        w2: s.w2.unwrap_or(d.w2),
        tune_split: s.tune_split.unwrap_or(d.tune_split),
        grid_size: s.grid_size.unwrap_or(d.grid_size),
        tune_w2: s.tune_w2.unwrap_or(d.tune_w2),
        fixed_tau: s.tau,
    };
    if let Some(t) = cfg.fixed_tau {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("tau {t} outside [0, 1]")));
        }
    }
    let intervals = s.intervals.unwrap_or(true);
    let effective = json!({ "predict": cfg, "intervals": intervals, "range": s.range });
    let mut hasher = Hasher::new("predict", &effective);
    let (params, _, boot) = load_params(s, &mut hasher)?;
    let events = load_events(s, &mut hasher)?;
    let hash = hasher.finish();
    let ci = if intervals { boot.as_ref() } else { None };
    let outcome = predict_pipeline(&params, &events, &cfg, ci)?;
    let out = s.out_dir()?;

    let path = out.join("predictions.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(w, "# config_hash={hash}")?;
    write_records_csv(&outcome.records, &mut w)?;
    w.flush()?;

    let metrics = json!({
        "config": effective,
        "policy": outcome.policy,
        "eval_from": events.date(outcome.eval_from),
        "metrics": outcome.metrics,
        "warnings": outcome.warnings,
    });
    write_json(&out.join("metrics.json"), &stamp(metrics, &hash))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let m = &outcome.metrics.micro;
    eprintln!(
        "{:?} policy: precision {:.4}, recall {:.4}, F1 {:.4} over {} records",
        cfg.kind, m.precision, m.recall, m.f1, outcome.metrics.records
    );
    Ok(Outcome::Done)
}

fn bounds_json(thetas: &ConditionNumbers, kappa: usize, n: f64, epsilon: f64, rho: f64) -> Result<Value> {
    let mut out = serde_json::Map::new();
    for (name, method) in [("ls", BoundMethod::Ls), ("ml", BoundMethod::Ml { rho })] {
        let mut values = serde_json::Map::new();
        let mut raw = Vec::new();
        for (key, p) in [("1", Norm::One), ("2", Norm::Two), ("inf", Norm::Inf)] {
            let v = bound_value(thetas.get(p), thetas.theta_1, kappa, n, epsilon, method)?;
            raw.push(v);
            values.insert(key.into(), if v.is_finite() { json!(v) } else { Value::Null });
        }
        let ratio = |a: f64, b: f64| {
            let r = a / b;
            if r.is_finite() { json!(r) } else { Value::Null }
        };
        values.insert(
            "ratios_to_2".into(),
            json!({ "1": ratio(raw[0], raw[1]), "inf": ratio(raw[2], raw[1]) }),
        );
        out.insert(name.into(), Value::Object(values));
    }
    Ok(Value::Object(out))
}

pub fn bound_cmd(s: &Settings) -> Result<Outcome> {
    let epsilon = s.epsilon.unwrap_or(0.1);
    let rho = s.rho.unwrap_or(FitOptions::default().rho);
    let value = if let Some(t) = &s.thetas {
        if t.len() != 3 {
            return Err(Error::InvalidArgument("--thetas takes theta_1,theta_2,theta_inf".into()));
        }
        let (Some(kappa), Some(n)) = (s.kappa, s.n) else {
            return Err(Error::InvalidArgument("--thetas needs --kappa and --n".into()));
        };
        let thetas = ConditionNumbers {
            theta_1: t[0],
            theta_1_certificate: Certificate::Bounded,
            theta_2: t[1],
            theta_inf: t[2],
        };
        let effective = json!({ "thetas": t, "kappa": kappa, "n": n, "epsilon": epsilon, "rho": rho });
        let hash = Hasher::new("bound", &effective).finish();
        stamp(
            json!({
                "config": effective,
                "thetas": thetas,
                "kappa": kappa,
                "n": n,
                "bounds": bounds_json(&thetas, kappa, n, epsilon, rho)?,
            }),
            &hash,
        )
    } else {
        let d = depth(s)?;
        let effective = json!({ "d": d, "epsilon": epsilon, "rho": rho, "range": s.range });
        let mut hasher = Hasher::new("bound", &effective);
        let events = load_events(s, &mut hasher)?;
        let hash = hasher.finish();
        if events.m() != 1 {
            return Err(Error::InvalidArgument("condition numbers are defined for single-state events".into()));
        }
        let design = DesignMatrix::from_patterns(&ramping::estimate::PatternData::new(&events, d, true)?)?;
        let thetas = ConditionNumbers::of_design(&design);
        let kappa = design.kappa();
        stamp(
            json!({
                "config": effective,
                "locations": events.ids,
                "thetas": thetas,
                "kappa": kappa,
                "n": design.n,
                "bounds": bounds_json(&thetas, kappa, design.n, epsilon, rho)?,
            }),
            &hash,
        )
    };
    let path = s.out_dir()?.join("bound.json");
    write_json(&path, &value)?;
    eprintln!("thetas: {}", value["thetas"]);
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}

pub fn sweep_cmd(s: &Settings) -> Result<Outcome> {
    let base = extraction(s)?;
    let d = depth(s)?;
    let opts = fit_options(s)?;
    let train_frac = s.train_frac.unwrap_or(0.7);
    let grid = s
        .deltas
        .clone()
        .unwrap_or_else(|| vec![0.0005, 0.001, 0.005, 0.01, 0.05, 0.1]);
    let effective = json!({
        "extraction": base,
        "d": d,
        "options": opts,
        "train_frac": train_frac,
        "deltas": grid,
        "range": s.range,
    });
    let mut hasher = Hasher::new("sweep-delta", &effective);
    let dataset = load_dataset(s, &mut hasher)?;
    let hash = hasher.finish();
    let report = delta_sweep(&dataset, &base, &grid, |ev| frequency_comparison(ev, d, &opts, train_frac))?;
    for p in &report.points {
        eprintln!(
            "delta {:<8} mse {:.6e} events {}{}",
            p.delta,
            p.mse,
            p.events,
            if p.degenerate { " (degenerate)" } else { "" }
        );
    }
    let value = stamp(json!({ "config": effective, "sweep": report }), &hash);
    let path = s.out_dir()?.join("sweep.json");
    write_json(&path, &value)?;
    eprintln!("wrote {}", path.display());
    Ok(Outcome::Done)
}
