use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ramping::{Error, Result};

/// Every tunable of the pipeline. Each field can come from the command line
/// or from a flat TOML config file; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Flat key-value TOML file with defaults for any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Dataset manifest (TOML list of per-location NSRDB files).
    #[arg(long, help_heading = "Inputs")]
    pub manifest: Option<PathBuf>,
    /// Dataset in the canonical long CSV layout, instead of a manifest.
    #[arg(long, help_heading = "Inputs")]
    pub data: Option<PathBuf>,
    /// Event CSV produced by `extract` or `simulate`.
    #[arg(long, help_heading = "Inputs")]
    pub events: Option<PathBuf>,
    /// Parameter JSON (a params document or a fit report).
    #[arg(long, help_heading = "Inputs")]
    pub params: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, help_heading = "Inputs")]
    pub out: Option<PathBuf>,
    /// Restrict the dataset or events to START:END (inclusive ISO dates).
    #[arg(long, help_heading = "Inputs")]
    pub range: Option<String>,

    #[arg(long, help_heading = "Extraction")]
    pub w1: Option<usize>,
    #[arg(long, help_heading = "Extraction")]
    pub delta: Option<f64>,
    #[arg(long, help_heading = "Extraction")]
    pub frac: Option<f64>,
    #[arg(long, help_heading = "Extraction")]
    pub states: Option<usize>,
    /// intra-day or daily-average.
    #[arg(long, help_heading = "Extraction")]
    pub mode: Option<String>,

    /// History depth in days.
    #[arg(long, help_heading = "Estimation")]
    pub d: Option<usize>,
    /// ls or ml.
    #[arg(long, help_heading = "Estimation")]
    pub objective: Option<String>,
    #[arg(long, help_heading = "Estimation")]
    pub rho: Option<f64>,
    #[arg(long, help_heading = "Estimation")]
    pub tol: Option<f64>,
    #[arg(long, help_heading = "Estimation")]
    pub max_iter: Option<usize>,
    /// Bootstrap replicates (0 disables the bootstrap).
    #[arg(long, help_heading = "Estimation")]
    pub bootstrap: Option<usize>,
    /// Bound confidence level.
    #[arg(long, help_heading = "Estimation")]
    pub epsilon: Option<f64>,
    /// Family-wise level of the bootstrap intervals.
    #[arg(long, help_heading = "Estimation")]
    pub ci_epsilon: Option<f64>,
    /// Fit one extra model per START:END range.
    #[arg(long = "season", help_heading = "Estimation")]
    pub seasons: Option<Vec<String>>,

    /// static or dynamic.
    #[arg(long, help_heading = "Prediction")]
    pub policy: Option<String>,
    #[arg(long, help_heading = "Prediction")]
    pub alpha: Option<f64>,
    #[arg(long, help_heading = "Prediction")]
    pub w2: Option<usize>,
    #[arg(long, help_heading = "Prediction")]
    pub tune_split: Option<f64>,
    #[arg(long, help_heading = "Prediction")]
    pub grid_size: Option<usize>,
    /// Fixed static threshold; skips threshold tuning.
    #[arg(long, help_heading = "Prediction")]
    pub tau: Option<f64>,
    /// Also choose w2 on the tuning split.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Prediction")]
    pub tune_w2: Option<bool>,
    /// Use the bootstrap intervals of the fit report, when present.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Prediction")]
    pub intervals: Option<bool>,

    /// Days to simulate.
    #[arg(long, help_heading = "Simulation")]
    pub days: Option<usize>,
    #[arg(long, help_heading = "Simulation")]
    pub seed: Option<u64>,

    /// Comma-separated delta grid.
    #[arg(long, value_delimiter = ',', help_heading = "Sweep")]
    pub deltas: Option<Vec<f64>>,
    /// Leading fraction of days used to fit in the frequency test.
    #[arg(long, help_heading = "Sweep")]
    pub train_frac: Option<f64>,

    /// Condition numbers theta_1,theta_2,theta_inf to evaluate the bounds at,
    /// instead of computing them from events.
    #[arg(long, value_delimiter = ',', help_heading = "Bounds")]
    pub thetas: Option<Vec<f64>>,
    #[arg(long, help_heading = "Bounds")]
    pub kappa: Option<usize>,
    #[arg(long, help_heading = "Bounds")]
    pub n: Option<f64>,

    /// Worker threads (also RAMPING_WORKERS).
    #[arg(long)]
    pub workers: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl Settings {
    /// Fill unset flags from the config file, if one was given.
    pub fn resolve(mut self) -> Result<Settings> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))?;
        let file: Settings =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });
        let file = Settings {
            manifest: rel(file.manifest),
            data: rel(file.data),
            events: rel(file.events),
            params: rel(file.params),
            out: rel(file.out),
            ..file
        };
        merge_fields!(self, file; manifest, data, events, params, out, range, w1, delta, frac,
            states, mode, d, objective, rho, tol, max_iter, bootstrap, epsilon, ci_epsilon,
            seasons, policy, alpha, w2, tune_split, grid_size, tau, tune_w2, intervals, days, seed,
            deltas, train_frac, thetas, kappa, n, workers);
        Ok(self)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

pub fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match p {
        Some(p) if p.exists() => Ok(p),
        Some(p) => Err(Error::InvalidArgument(format!("--{flag}: {} does not exist", p.display()))),
        None => Err(Error::InvalidArgument(format!("--{flag} is required"))),
    }
}

/// Digest of the effective settings and of every input file's bytes. Paths
/// are left out so that moving the inputs does not change the hash.
pub struct Hasher(Sha256);

impl Hasher {
    pub fn new<T: Serialize>(command: &str, effective: &T) -> Self {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(effective).expect("settings serialize"));
        Hasher(h)
    }

    pub fn file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.0.update([0]);
        self.0.update(Sha256::digest(&bytes));
        Ok(())
    }

    pub fn finish(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
