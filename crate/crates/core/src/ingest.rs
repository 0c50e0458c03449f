//! Radiation data ingestion.
//!
//! Reads NSRDB-style CSV exports (one file per location), groups the
//! readings into complete days and offers the day-level operations the
//! event extraction needs: daily averaging, date-range slicing, and the
//! GHI/DNI/DHI consistency check.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl SensorMeta {
    pub fn new(id: impl Into<String>, latitude: f64, longitude: f64) -> Result<Self> {
        let meta = SensorMeta {
            id: id.into(),
            latitude,
            longitude,
        };
        meta.validate()?;
        Ok(meta)
    }

    fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Format(format!(
                "sensor {}: latitude {} outside [-90, 90]",
                self.id, self.latitude
            )));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Format(format!(
                "sensor {}: longitude {} outside [-180, 180]",
                self.id, self.longitude
            )));
        }
        Ok(())
    }
}

/// Optional per-reading channels that travel alongside GHI.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxChannels {
    pub dni: Vec<f64>,
    pub dhi: Vec<f64>,
    pub zenith: Vec<f64>,
}

/// Day-indexed irradiance readings of one sensor: `values` is a row-major
/// `T x n` matrix of GHI in W/m².
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationSeries {
    pub meta: SensorMeta,
    pub start_date: NaiveDate,
    pub n: usize,
    pub values: Vec<f64>,
    pub aux: Option<AuxChannels>,
}

impl RadiationSeries {
    pub fn new(
        meta: SensorMeta,
        start_date: NaiveDate,
        n: usize,
        values: Vec<f64>,
        aux: Option<AuxChannels>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("readings per day must be at least 1"));
        }
        if values.is_empty() || !values.len().is_multiple_of(n) {
            return Err(Error::dim(format!(
                "{} readings do not form whole days of {n}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Format(format!(
                "sensor {}: GHI reading {} at index {i} is negative or not finite",
                meta.id, values[i]
            )));
        }
        if let Some(aux) = &aux {
            if aux.dni.len() != values.len()
                || aux.dhi.len() != values.len()
                || aux.zenith.len() != values.len()
            {
                return Err(Error::dim("auxiliary channels must match GHI length"));
            }
        }
        meta.validate()?;
        Ok(RadiationSeries {
            meta,
            start_date,
            n,
            values,
            aux,
        })
    }

    /// Number of days `T`.
    pub fn days(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn day(&self, t: usize) -> &[f64] {
        &self.values[t * self.n..(t + 1) * self.n]
    }

    pub fn date(&self, t: usize) -> NaiveDate {
        self.start_date + Duration::days(t as i64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.days() - 1)
    }

    /// Restrict to the days in `range`; `None` when nothing overlaps.
    pub fn slice(&self, range: DateRange) -> Option<RadiationSeries> {
        let (lo, hi) = range.day_indices(self.start_date, self.days())?;
        let cut = |v: &[f64]| v[lo * self.n..hi * self.n].to_vec();
        Some(RadiationSeries {
            meta: self.meta.clone(),
            start_date: self.date(lo),
            n: self.n,
            values: cut(&self.values),
            aux: self.aux.as_ref().map(|a| AuxChannels {
                dni: cut(&a.dni),
                dhi: cut(&a.dhi),
                zenith: cut(&a.zenith),
            }),
        })
    }
}

/// Inclusive calendar interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::invalid(format!("date range end {end} precedes start {start}")));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Half-open day index interval `[lo, hi)` of a `days`-long series starting at `first`.
    pub(crate) fn day_indices(&self, first: NaiveDate, days: usize) -> Option<(usize, usize)> {
        if days == 0 {
            return None;
        }
        let last = first + Duration::days(days as i64 - 1);
        let lo = self.start.max(first);
        let hi = self.end.min(last);
        if hi < lo {
            return None;
        }
        let lo_i = (lo - first).num_days() as usize;
        let hi_i = (hi - first).num_days() as usize + 1;
        Some((lo_i, hi_i))
    }

    /// Parse `YYYY-MM-DD:YYYY-MM-DD`.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("date range `{s}` is not START:END")))?;
        let parse = |x: &str| {
            NaiveDate::parse_from_str(x.trim(), "%Y-%m-%d")
                .map_err(|e| Error::invalid(format!("bad date `{x}`: {e}")))
        };
        DateRange::new(parse(a)?, parse(b)?)
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// Time-aligned collection of sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub series: Vec<RadiationSeries>,
}

impl Dataset {
    pub fn new(series: Vec<RadiationSeries>) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::invalid("a dataset needs at least one location"))?;
        let mut seen = HashSet::new();
        for s in &series {
            if !seen.insert(s.meta.id.as_str()) {
                return Err(Error::Format(format!("duplicate sensor id `{}`", s.meta.id)));
            }
            if s.n != first.n || s.days() != first.days() || s.start_date != first.start_date {
                return Err(Error::Format(format!(
                    "sensor `{}` is not aligned with `{}` (start/days/readings per day differ)",
                    s.meta.id, first.meta.id
                )));
            }
        }
        Ok(Dataset { series })
    }

    pub fn locations(&self) -> usize {
        self.series.len()
    }

    pub fn days(&self) -> usize {
        self.series[0].days()
    }

    pub fn readings_per_day(&self) -> usize {
        self.series[0].n
    }

    pub fn start_date(&self) -> NaiveDate {
        self.series[0].start_date
    }

    pub fn ids(&self) -> Vec<String> {
        self.series.iter().map(|s| s.meta.id.clone()).collect()
    }
}

/// Where the timestamp lives in a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampColumns {
    /// NSRDB layout: separate Year/Month/Day/Hour/Minute columns.
    Split {
        year: String,
        month: String,
        day: String,
        hour: String,
        minute: String,
    },
    /// One ISO-8601 column (`2017-01-01T00:30:00`, optional trailing offset ignored).
    Iso(String),
}

/// Column names to read. Auxiliary channels are loaded only when all three are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: TimestampColumns,
    pub ghi: String,
    pub dni: Option<String>,
    pub dhi: Option<String>,
    pub zenith: Option<String>,
    /// Expected readings per day; inferred from the fullest day when absent.
    pub readings_per_day: Option<usize>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            timestamp: TimestampColumns::Split {
                year: "Year".into(),
                month: "Month".into(),
                day: "Day".into(),
                hour: "Hour".into(),
                minute: "Minute".into(),
            },
            ghi: "GHI".into(),
            dni: Some("DNI".into()),
            dhi: Some("DHI".into()),
            zenith: Some("Solar Zenith Angle".into()),
            readings_per_day: None,
        }
    }
}

/// Parse one NSRDB-style CSV. Sensor metadata comes from the NSRDB two-line
/// header block when present, otherwise from a `<file>.meta.toml` sidecar.
pub fn parse_nsrdb(path: &Path, map: &ColumnMap) -> Result<RadiationSeries> {
    parse_nsrdb_with_meta(path, map, None)
}

/// As [`parse_nsrdb`], with metadata supplied by the caller (e.g. a manifest),
/// which takes precedence over anything found in the file.
pub fn parse_nsrdb_with_meta(
    path: &Path,
    map: &ColumnMap,
    meta: Option<SensorMeta>,
) -> Result<RadiationSeries> {
    let file = std::fs::File::open(path)?;
    let (header_meta, series) = parse_nsrdb_reader(file, map)?;
    let meta = match meta.or(header_meta) {
        Some(m) => m,
        None => read_sidecar(path)?,
    };
    meta.validate()?;
    Ok(RadiationSeries { meta, ..series })
}

#[derive(Deserialize)]
struct Sidecar {
    id: String,
    latitude: f64,
    longitude: f64,
}

fn read_sidecar(path: &Path) -> Result<SensorMeta> {
    let mut side = path.as_os_str().to_owned();
    side.push(".meta.toml");
    let side = PathBuf::from(side);
    let text = std::fs::read_to_string(&side).map_err(|_| {
        Error::Format(format!(
            "{}: no NSRDB header block and no sidecar {}",
            path.display(),
            side.display()
        ))
    })?;
    let sc: Sidecar =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", side.display())))?;
    SensorMeta::new(sc.id, sc.latitude, sc.longitude)
}

/// Reader-level parser; the returned series carries placeholder metadata
/// when the input has no NSRDB header block.
pub fn parse_nsrdb_reader<R: Read>(
    reader: R,
    map: &ColumnMap,
) -> Result<(Option<SensorMeta>, RadiationSeries)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let next = |records: &mut csv::StringRecordsIter<R>| -> Result<Option<csv::StringRecord>> {
        records.next().transpose().map_err(Error::from)
    };

    let mut first = next(&mut records)?.ok_or_else(|| Error::Format("empty file".into()))?;
    let mut header_meta = None;
    if first.iter().any(|c| c == "Latitude") && !first.iter().any(|c| c == map.ghi) {
        let values = next(&mut records)?
            .ok_or_else(|| Error::Format("metadata header without values".into()))?;
        header_meta = Some(meta_from_block(&first, &values)?);
        first = next(&mut records)?.ok_or_else(|| Error::Format("missing column header".into()))?;
    }
    let header = first;
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    };
    let ts_cols = match &map.timestamp {
        TimestampColumns::Split {
            year,
            month,
            day,
            hour,
            minute,
        } => TsIdx::Split([col(year)?, col(month)?, col(day)?, col(hour)?, col(minute)?]),
        TimestampColumns::Iso(name) => TsIdx::Iso(col(name)?),
    };
    let ghi_col = col(&map.ghi)?;
    let aux_cols = match (&map.dni, &map.dhi, &map.zenith) {
        (Some(a), Some(b), Some(c)) => match (col(a), col(b), col(c)) {
            (Ok(a), Ok(b), Ok(c)) => Some([a, b, c]),
            _ => None,
        },
        _ => None,
    };

    struct Row {
        ts: NaiveDateTime,
        line: usize,
        ghi: f64,
        aux: [f64; 3],
    }
    let mut rows = Vec::new();
    while let Some(rec) = next(&mut records)? {
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let cell = |i: usize| -> Result<&str> {
            rec.get(i).ok_or_else(|| Error::Parse {
                row: line,
                msg: format!("missing cell in column {i}"),
            })
        };
        let num = |i: usize| -> Result<f64> {
            let c = cell(i)?;
            c.parse::<f64>().map_err(|_| Error::Parse {
                row: line,
                msg: format!("`{c}` in column `{}` is not a number", &header[i]),
            })
        };
        let ts = match ts_cols {
            TsIdx::Split(idx) => {
                let mut parts = [0i64; 5];
                for (slot, &i) in parts.iter_mut().zip(idx.iter()) {
                    let c = cell(i)?;
                    *slot = c.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64).ok_or_else(
                        || Error::Parse {
                            row: line,
                            msg: format!("`{c}` in column `{}` is not an integer", &header[i]),
                        },
                    )?;
                }
                NaiveDate::from_ymd_opt(parts[0] as i32, parts[1] as u32, parts[2] as u32)
                    .and_then(|d| d.and_hms_opt(parts[3] as u32, parts[4] as u32, 0))
                    .ok_or_else(|| Error::Parse {
                        row: line,
                        msg: "invalid calendar timestamp".into(),
                    })?
            }
            TsIdx::Iso(i) => parse_iso(cell(i)?).ok_or_else(|| Error::Parse {
                row: line,
                msg: format!("`{}` is not an ISO-8601 timestamp", cell(i).unwrap_or("")),
            })?,
        };
        let ghi = num(ghi_col)?;
        let aux = match aux_cols {
            Some([a, b, c]) => [num(a)?, num(b)?, num(c)?],
            None => [0.0; 3],
        };
        rows.push(Row { ts, line, ghi, aux });
    }
    if rows.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    rows.sort_by_key(|r| r.ts);
    for w in rows.windows(2) {
        if w[0].ts == w[1].ts {
            return Err(Error::Parse {
                row: w[1].line,
                msg: format!("duplicate timestamp {}", w[1].ts),
            });
        }
    }

    let mut per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for r in &rows {
        *per_day.entry(r.ts.date()).or_default() += 1;
    }
    let n = map
        .readings_per_day
        .unwrap_or_else(|| per_day.values().copied().max().unwrap_or(0));
    let start = *per_day.keys().next().unwrap();
    let end = *per_day.keys().next_back().unwrap();
    let mut date = start;
    while date <= end {
        let found = per_day.get(&date).copied().unwrap_or(0);
        if found != n {
            return Err(Error::RaggedDay {
                date,
                expected: n,
                found,
            });
        }
        date += Duration::days(1);
    }

    let values: Vec<f64> = rows.iter().map(|r| r.ghi).collect();
    let aux = aux_cols.map(|_| AuxChannels {
        dni: rows.iter().map(|r| r.aux[0]).collect(),
        dhi: rows.iter().map(|r| r.aux[1]).collect(),
        zenith: rows.iter().map(|r| r.aux[2]).collect(),
    });
    let placeholder = header_meta
        .clone()
        .unwrap_or_else(|| SensorMeta {
            id: String::new(),
            latitude: 0.0,
            longitude: 0.0,
        });
    let series = RadiationSeries::new(placeholder, start, n, values, aux)?;
    Ok((header_meta, series))
}

#[derive(Clone, Copy)]
enum TsIdx {
    Split([usize; 5]),
    Iso(usize),
}

fn parse_iso(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    None
}

fn meta_from_block(keys: &csv::StringRecord, values: &csv::StringRecord) -> Result<SensorMeta> {
    let get = |k: &str| -> Option<&str> {
        keys.iter().position(|c| c == k).and_then(|i| values.get(i))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("metadata field `{k}` missing or not numeric")))
    };
    let id = get("Location ID")
        .or_else(|| get("Station ID"))
        .unwrap_or("unknown")
        .to_string();
    SensorMeta::new(id, num("Latitude")?, num("Longitude")?)
}

/// `ghi - (dni * cos(zenith) + dhi)`, zenith in degrees.
pub fn validate_ghi(ghi: f64, dni: f64, dhi: f64, zenith_deg: f64) -> f64 {
    ghi - (dni * zenith_deg.to_radians().cos() + dhi)
}

#[derive(Debug, Clone, Serialize)]
pub struct GhiFlag {
    pub date: NaiveDate,
    pub slot: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GhiReport {
    pub checked: usize,
    pub max_abs_residual: f64,
    pub flagged: Vec<GhiFlag>,
}

/// Warning-level consistency report; `None` if the series has no auxiliary channels.
pub fn ghi_identity_report(series: &RadiationSeries, tolerance: f64) -> Option<GhiReport> {
    let aux = series.aux.as_ref()?;
    let mut report = GhiReport {
        checked: 0,
        max_abs_residual: 0.0,
        flagged: Vec::new(),
    };
    for (i, &ghi) in series.values.iter().enumerate() {
        let r = validate_ghi(ghi, aux.dni[i], aux.dhi[i], aux.zenith[i]);
        report.checked += 1;
        report.max_abs_residual = report.max_abs_residual.max(r.abs());
        if r.abs() > tolerance {
            report.flagged.push(GhiFlag {
                date: series.date(i / series.n),
                slot: i % series.n,
                residual: r,
            });
        }
    }
    Some(report)
}

/// Replace each day by the mean of its readings (`n` becomes 1).
pub fn daily_average(series: &RadiationSeries) -> RadiationSeries {
    let values = series
        .values
        .chunks(series.n)
        .map(|day| day.iter().sum::<f64>() / series.n as f64)
        .collect();
    RadiationSeries {
        meta: series.meta.clone(),
        start_date: series.start_date,
        n: 1,
        values,
        aux: None,
    }
}

pub fn daily_average_dataset(dataset: &Dataset) -> Dataset {
    Dataset {
        series: dataset.series.iter().map(daily_average).collect(),
    }
}

/// Restrict every series to `range`.
pub fn seasonal_slice(dataset: &Dataset, range: DateRange) -> Result<Dataset> {
    let series: Option<Vec<_>> = dataset.series.iter().map(|s| s.slice(range)).collect();
    match series {
        Some(series) => Ok(Dataset { series }),
        None => Err(Error::EmptySlice {
            start: range.start,
            end: range.end,
        }),
    }
}

/// Dataset manifest: one entry per location file plus optional column overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub columns: Option<ColumnMap>,
    pub location: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub file: PathBuf,
}

/// Load every file named in a TOML manifest. Relative paths resolve against
/// the manifest's directory; files are parsed in parallel.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let map = manifest.columns.clone().unwrap_or_default();
    let series: Result<Vec<_>> = manifest
        .location
        .par_iter()
        .map(|entry| {
            let file = if entry.file.is_absolute() {
                entry.file.clone()
            } else {
                base.join(&entry.file)
            };
            let meta = SensorMeta::new(entry.id.clone(), entry.latitude, entry.longitude)?;
            parse_nsrdb_with_meta(&file, &map, Some(meta))
        })
        .collect();
    Dataset::new(series?)
}

/// Canonical dump: `# location,<id>,<lat>,<lon>` lines, then
/// `location_id,date,slot,ghi[,dni,dhi,zenith]` rows.
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let with_aux = dataset.series.iter().all(|s| s.aux.is_some());
    for s in &dataset.series {
        writeln!(out, "# location,{},{},{}", s.meta.id, s.meta.latitude, s.meta.longitude)?;
    }
    if with_aux {
        writeln!(out, "location_id,date,slot,ghi,dni,dhi,zenith")?;
    } else {
        writeln!(out, "location_id,date,slot,ghi")?;
    }
    for s in &dataset.series {
        for (i, v) in s.values.iter().enumerate() {
            let date = s.date(i / s.n);
            write!(out, "{},{},{},{}", s.meta.id, date, i % s.n, v)?;
            if with_aux {
                let a = s.aux.as_ref().unwrap();
                write!(out, ",{},{},{}", a.dni[i], a.dhi[i], a.zenith[i])?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Inverse of [`write_dataset_csv`].
pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset> {
    let reader = BufReader::new(input);
    let mut metas = Vec::new();
    let mut body = String::new();
    for line in reader.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# location,") {
            let parts: Vec<&str> = rest.rsplitn(3, ',').collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!("bad location line `{line}`")));
            }
            let lon: f64 = parts[0].parse().map_err(|_| Error::Format(format!("bad longitude in `{line}`")))?;
            let lat: f64 = parts[1].parse().map_err(|_| Error::Format(format!("bad latitude in `{line}`")))?;
            metas.push(SensorMeta::new(parts[2], lat, lon)?);
        } else if !line.starts_with('#') {
            body.push_str(&line);
            body.push('\n');
        }
    }
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let with_aux = headers.len() == 7;
    struct Acc {
        start: Option<NaiveDate>,
        slots: usize,
        values: Vec<f64>,
        aux: [Vec<f64>; 3],
    }
    let mut acc: Vec<Acc> = metas
        .iter()
        .map(|_| Acc {
            start: None,
            slots: 0,
            values: Vec::new(),
            aux: Default::default(),
        })
        .collect();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let idx = metas
            .iter()
            .position(|m| m.id == rec[0])
            .ok_or_else(|| Error::Parse {
                row: line,
                msg: format!("unknown location `{}`", &rec[0]),
            })?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Parse {
                row: line,
                msg: format!("`{}` is not a number", &rec[i]),
            })
        };
        let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| Error::Parse {
            row: line,
            msg: format!("bad date `{}`", &rec[1]),
        })?;
        let slot: usize = rec[2].parse().map_err(|_| Error::Parse {
            row: line,
            msg: format!("bad slot `{}`", &rec[2]),
        })?;
        let a = &mut acc[idx];
        a.start.get_or_insert(date);
        a.slots = a.slots.max(slot + 1);
        a.values.push(parse(3)?);
        if with_aux {
            for c in 0..3 {
                let v = parse(4 + c)?;
                a.aux[c].push(v);
            }
        }
    }
    let series: Result<Vec<_>> = metas
        .into_iter()
        .zip(acc)
        .map(|(meta, a)| {
            let start = a
                .start
                .ok_or_else(|| Error::Format(format!("location `{}` has no rows", meta.id)))?;
            let [dni, dhi, zenith] = a.aux;
            let aux = with_aux.then_some(AuxChannels { dni, dhi, zenith });
            RadiationSeries::new(meta, start, a.slots, a.values, aux)
        })
        .collect();
    Dataset::new(series?)
}

/// Day-of-year helper used by seasonal configs: `MM-DD:MM-DD` in a given year.
pub fn season_in_year(spec: &str, year: i32) -> Result<DateRange> {
    let (a, b) = spec
        .split_once(':')
        .ok_or_else(|| Error::invalid(format!("season `{spec}` is not MM-DD:MM-DD")))?;
    let md = |x: &str| -> Result<NaiveDate> {
        let (m, d) = x
            .trim()
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("bad month-day `{x}`")))?;
        let m: u32 = m.parse().map_err(|_| Error::invalid(format!("bad month `{m}`")))?;
        let d: u32 = d.parse().map_err(|_| Error::invalid(format!("bad day `{d}`")))?;
        NaiveDate::from_ymd_opt(year, m, d).ok_or_else(|| Error::invalid(format!("no date {year}-{m}-{d}")))
    };
    DateRange::new(md(a)?, md(b)?)
}

/// Calendar year of a date, exposed for seasonal splitting.
pub fn year_of(date: NaiveDate) -> i32 {
    date.year()
}
