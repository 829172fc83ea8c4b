//! Merges flags, an optional JSON config file and defaults, in that order of
//! precedence.

use std::fs;
use std::path::{Path, PathBuf};

use mpp_core::backtest::PriorConfig;
use mpp_core::posterior::ReturnsWindow;
use mpp_core::PortfolioContext;
use serde::{Deserialize, Serialize};

use crate::io::{self, IoError, TableKind};
use crate::{CliError, CommonArgs, PriorFlag};

pub const DEFAULT_DRAWS: usize = 100_000;
pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_R0: f64 = 1.0;

/// Keys accepted in a `--config` file. All are optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub kind: Option<TableKind>,
    /// Either a prior name or a full prior object.
    pub prior: Option<PriorEntry>,
    pub r0: Option<f64>,
    pub d0: Option<f64>,
    pub presample_n: Option<usize>,
    pub presample_offset: Option<usize>,
    pub window: Option<usize>,
    pub gamma: Option<f64>,
    pub wealth: Option<f64>,
    pub t: Option<usize>,
    pub horizon: Option<usize>,
    pub rf: Option<f64>,
    pub rf_file: Option<PathBuf>,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    pub level: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PriorEntry {
    Name(PriorFlag),
    Full(PriorConfig),
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub enum RfSource {
    Constant(f64),
    File(PathBuf),
}

/// Fully resolved settings for one invocation. The prior is resolved
/// lazily because its defaults depend on the data.
#[derive(Debug, Clone)]
pub struct Settings {
    pub input: PathBuf,
    pub kind: TableKind,
    pub prior_flag: PriorFlag,
    pub prior_object: Option<PriorConfig>,
    pub r0: Option<f64>,
    pub d0: Option<f64>,
    pub presample_n: Option<usize>,
    pub presample_offset: Option<usize>,
    pub window: Option<usize>,
    pub gamma: f64,
    pub wealth: f64,
    pub t: usize,
    pub horizon: Option<usize>,
    pub rf: RfSource,
    pub draws: usize,
    pub seed: u64,
    pub level: f64,
    pub output: Option<PathBuf>,
}

/// Reproducibility block embedded in every JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub seed: u64,
    #[serde(rename = "B")]
    pub draws: usize,
    pub prior: String,
    pub n: usize,
    pub k: usize,
    pub t: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let (file_flag, prior_object) = match file.prior {
            Some(PriorEntry::Name(f)) => (Some(f), None),
            Some(PriorEntry::Full(p)) => (Some(flag_of(&p)), Some(p)),
            None => (None, None),
        };
        let rf = match (args.rf, &args.rf_file, file.rf, file.rf_file) {
            (Some(r), _, _, _) => RfSource::Constant(r),
            (None, Some(p), _, _) => RfSource::File(p.clone()),
            (None, None, Some(_), Some(_)) => {
                return Err(CliError::Usage("config sets both rf and rf_file".into()));
            }
            (None, None, Some(r), None) => RfSource::Constant(r),
            (None, None, None, Some(p)) => RfSource::File(p),
            (None, None, None, None) => RfSource::Constant(0.0),
        };
        Ok(Settings {
            input: args.input.clone(),
            kind: args.kind.or(file.kind).unwrap_or(TableKind::Returns),
            prior_flag: args.prior.or(file_flag).unwrap_or(PriorFlag::Diffuse),
            prior_object,
            r0: args.r0.or(file.r0),
            d0: args.d0.or(file.d0),
            presample_n: args.presample_n.or(file.presample_n),
            presample_offset: args.presample_offset.or(file.presample_offset),
            window: args.window.or(file.window),
            gamma: args.gamma.or(file.gamma).unwrap_or(1.0),
            wealth: args.wealth.or(file.wealth).unwrap_or(1.0),
            t: args.t.or(file.t).unwrap_or(0),
            horizon: args.horizon.or(file.horizon),
            rf,
            draws: args.draws.or(file.draws).unwrap_or(DEFAULT_DRAWS),
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            level: args.level.or(file.level).unwrap_or(DEFAULT_LEVEL),
            output: args.output.clone(),
        })
    }

    pub fn load_data(&self) -> Result<ReturnsWindow, IoError> {
        io::ingest(&self.input, self.kind)
    }

    /// Per-row risk-free rates aligned with `data`.
    pub fn rf_series(&self, data: &ReturnsWindow) -> Result<Vec<f64>, IoError> {
        match &self.rf {
            RfSource::Constant(r) => Ok(vec![*r; data.n()]),
            RfSource::File(p) => io::read_rf_file(p, data),
        }
    }

    /// Default window: all rows, or half of them under empirical Bayes so
    /// that an equally long presample fits in front.
    pub fn window_or_default(&self, n: usize) -> usize {
        self.window.unwrap_or(match self.prior_flag {
            PriorFlag::EmpiricalBayes => n / 2,
            _ => n,
        })
    }

    /// The prior for a window of `window_n` rows. Empirical Bayes defaults
    /// to a presample of the same length ending where the window starts.
    pub fn prior(&self, window_n: usize) -> Result<PriorConfig, CliError> {
        match self.prior_flag {
            PriorFlag::Diffuse => Ok(PriorConfig::Diffuse),
            PriorFlag::Conjugate => match &self.prior_object {
                Some(PriorConfig::Conjugate(p)) => {
                    let mut p = p.clone();
                    if let Some(r0) = self.r0 {
                        p.r0 = r0;
                    }
                    if let Some(d0) = self.d0 {
                        p.d0 = d0;
                    }
                    Ok(PriorConfig::Conjugate(p))
                }
                _ => Err(CliError::Usage(
                    "--prior conjugate needs a config file with a prior object {kind, m0, r0, d0, s0}".into(),
                )),
            },
            PriorFlag::EmpiricalBayes => {
                let (file_n, file_d0, file_r0, file_offset) = match &self.prior_object {
                    Some(PriorConfig::EmpiricalBayes {
                        presample_n,
                        d0,
                        r0,
                        presample_offset,
                    }) => (Some(*presample_n), *d0, Some(*r0), Some(*presample_offset)),
                    _ => (None, None, None, None),
                };
                let presample_n = self.presample_n.or(file_n).unwrap_or(window_n);
                Ok(PriorConfig::EmpiricalBayes {
                    presample_n,
                    d0: self.d0.or(file_d0),
                    r0: self.r0.or(file_r0).unwrap_or(DEFAULT_R0),
                    presample_offset: self.presample_offset.or(file_offset).unwrap_or(window_n),
                })
            }
        }
    }

    /// Context for a single decision at the end of the data. The rate over
    /// the coming period is taken as the last observed one and held flat.
    pub fn context(&self, rf: &[f64]) -> Result<PortfolioContext, CliError> {
        let horizon = self.horizon.unwrap_or(1);
        let rf_now = *rf.last().expect("ingest guarantees at least two rows");
        Ok(PortfolioContext::flat(self.gamma, self.wealth, self.t, horizon, rf_now)?)
    }

    pub fn meta(&self, prior: &str, n: usize, k: usize, horizon: usize) -> Meta {
        Meta {
            seed: self.seed,
            draws: self.draws,
            prior: prior.to_owned(),
            n,
            k,
            t: self.t,
            horizon,
        }
    }
}

fn flag_of(p: &PriorConfig) -> PriorFlag {
    match p {
        PriorConfig::Diffuse => PriorFlag::Diffuse,
        PriorConfig::Conjugate(_) => PriorFlag::Conjugate,
        PriorConfig::EmpiricalBayes { .. } => PriorFlag::EmpiricalBayes,
    }
}
