//! Subcommand handlers.

use std::io::Write;
use std::path::Path;

use mpp_core::backtest::{compare_priors, run_backtest, window_posterior, BacktestConfig, BacktestReport, WeightPolicy};
use mpp_core::linalg::matrix_rows;
use mpp_core::posterior::{empirical_bayes_hyperparams, ConjugatePrior, PriorSpec};
use mpp_core::predictive::{credible_band, default_probability, sample_predictive_wealth};
use mpp_core::weights::{
    asymptotic_covariance, bayes_estimate, normality_check, plugin_weights, sample_weights, standardize_batch,
    weight_covariance, SamplerKind, Selector,
};
use mpp_core::{MppError, RngStream};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::{self, IoError};
use crate::settings::{Settings, DEFAULT_R0};
use crate::{CliError, Command, PolicyFlag, SamplerFlag};

/// Stream used by single-shot sampling commands.
const SAMPLE_STREAM: u64 = 0;

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Estimate(args) => estimate(&Settings::resolve(&args)?),
        Command::SampleWeights { common, sampler, csv } => {
            let kind = match sampler.unwrap_or(SamplerFlag::Fast) {
                SamplerFlag::Fast => SamplerKind::Fast,
                SamplerFlag::Basic => SamplerKind::Basic,
            };
            sample(&Settings::resolve(&common)?, kind, csv.as_deref())
        }
        Command::PredictWealth { common, holdings } => predict(&Settings::resolve(&common)?, holdings),
        Command::Backtest {
            common,
            policy,
            csv,
            compare,
        } => backtest(&Settings::resolve(&common)?, policy, csv.as_deref(), compare),
        Command::CheckNormality(args) => check_normality(&Settings::resolve(&args)?),
        Command::FitPrior(args) => fit_prior(&Settings::resolve(&args)?),
    }
}

fn emit(settings: &Settings, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    match &settings.output {
        Some(p) => {
            let mut f = io::create(p)?;
            writeln!(f, "{text}").map_err(|e| write_error(p, e))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn write_error(path: &Path, e: impl ToString) -> CliError {
    IoError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
    .into()
}

/// Data, posterior and context for a decision after the last data row.
struct Single {
    data: mpp_core::ReturnsWindow,
    window: mpp_core::ReturnsWindow,
    post: mpp_core::PosteriorParams,
    ctx: mpp_core::PortfolioContext,
    prior_label: &'static str,
}

fn single(settings: &Settings) -> Result<Single, CliError> {
    let data = settings.load_data()?;
    let rf = settings.rf_series(&data)?;
    let window_n = settings.window_or_default(data.n());
    let prior = settings.prior(window_n)?;
    let (window, post) = window_posterior(&data, data.n(), window_n, &prior)?;
    let ctx = settings.context(&rf)?;
    Ok(Single {
        data,
        window,
        post,
        ctx,
        prior_label: prior.label(),
    })
}

impl Single {
    fn meta(&self, settings: &Settings) -> Value {
        json!(settings.meta(self.prior_label, self.window.n(), self.window.k(), self.ctx.horizon))
    }

    fn window_json(&self) -> Value {
        json!({
            "start": self.window.dates()[0],
            "end": self.window.dates()[self.window.n() - 1],
            "rows": self.window.n(),
        })
    }
}

fn estimate(settings: &Settings) -> Result<(), CliError> {
    let s = single(settings)?;
    let w = bayes_estimate(&s.post, &s.ctx)?;
    let cov = weight_covariance(&s.post, &s.ctx)?;
    let asy = asymptotic_covariance(&s.post, &s.ctx)?;
    let plugin = plugin_weights(&s.window, &s.ctx)?;
    emit(
        settings,
        &json!({
            "meta": s.meta(settings),
            "assets": s.data.assets(),
            "window": s.window_json(),
            "rf": s.ctx.rf_next(),
            "discount_factor": s.ctx.discount_factor()?,
            "weights": w.as_slice(),
            "weight_covariance": matrix_rows(cov.as_matrix()),
            "asymptotic_covariance": matrix_rows(asy.as_matrix()),
            "plugin_weights": plugin.as_slice(),
            "posterior": s.post,
        }),
    )
}

fn sample(settings: &Settings, kind: SamplerKind, csv: Option<&Path>) -> Result<(), CliError> {
    let s = single(settings)?;
    let rng = RngStream::new(settings.seed, SAMPLE_STREAM);
    let batch = sample_weights(kind, &s.post, &s.ctx, settings.draws, &Selector::identity(s.post.k()), &rng)?;
    let labels = s.data.assets().to_vec();
    match csv {
        Some(p) => {
            io::write_matrix(io::create(p)?, &labels, &batch.draws).map_err(|e| write_error(p, e))?;
            let means = mpp_core::stats::column_means(&batch.draws);
            emit(
                settings,
                &json!({
                    "meta": s.meta(settings),
                    "assets": labels,
                    "sampler": kind,
                    "csv": p.display().to_string(),
                    "draw_means": means,
                    "weights": bayes_estimate(&s.post, &s.ctx)?.as_slice(),
                }),
            )
        }
        None => {
            let stdout = std::io::stdout();
            io::write_matrix(stdout.lock(), &labels, &batch.draws).map_err(|e| write_error(Path::new("<stdout>"), e))
        }
    }
}

fn predict(settings: &Settings, holdings: Option<Vec<f64>>) -> Result<(), CliError> {
    let s = single(settings)?;
    let v = match holdings {
        Some(h) => {
            if h.len() != s.post.k() {
                return Err(MppError::DimensionMismatch {
                    expected: s.post.k(),
                    actual: h.len(),
                }
                .into());
            }
            DVector::from_vec(h)
        }
        None => bayes_estimate(&s.post, &s.ctx)?,
    };
    let rng = RngStream::new(settings.seed, SAMPLE_STREAM);
    let rf = s.ctx.rf_next();
    let batch = sample_predictive_wealth(&s.post, &v, settings.wealth, rf, settings.draws, &rng)?;
    let band = credible_band(&batch, settings.level)?;
    emit(
        settings,
        &json!({
            "meta": s.meta(settings),
            "assets": s.data.assets(),
            "window": s.window_json(),
            "holdings": v.as_slice(),
            "wealth": settings.wealth,
            "rf": rf,
            "band": band,
            "band_width": band.width(),
            "default_probability": default_probability(&batch),
            "predictive_mean": batch.mean(),
            "stream": batch.seed,
        }),
    )
}

fn backtest(settings: &Settings, policy: Option<PolicyFlag>, csv: Option<&Path>, compare: bool) -> Result<(), CliError> {
    let (Some(window_n), Some(horizon_t)) = (settings.window, settings.horizon) else {
        return Err(CliError::Usage("backtest needs --window and --horizon".into()));
    };
    let data = settings.load_data()?;
    let rf = settings.rf_series(&data)?;
    let config = BacktestConfig {
        window_n,
        horizon_t,
        gamma: settings.gamma,
        prior: settings.prior(window_n)?,
        draws: settings.draws,
        seed: settings.seed,
        credible_level: settings.level,
        weight_policy: match policy {
            None | Some(PolicyFlag::Bayes) => WeightPolicy::BayesEstimate,
            Some(PolicyFlag::Plugin) => WeightPolicy::Plugin,
            Some(PolicyFlag::Zero) => WeightPolicy::Zero,
        },
        initial_wealth: settings.wealth,
    };
    let meta = json!(settings.meta(config.prior.label(), window_n, data.k(), horizon_t));
    if compare {
        let pair = compare_priors(&data, &rf, &config)?;
        if let Some(p) = csv {
            write_periods(p, &[("diffuse", &pair.diffuse), (config.prior.label(), &pair.conjugate)])?;
        }
        return emit(
            settings,
            &json!({
                "meta": meta,
                "diffuse": pair.diffuse,
                "conjugate": pair.conjugate,
                "mean_band_width": {
                    "diffuse": pair.diffuse.mean_band_width(),
                    "conjugate": pair.conjugate.mean_band_width(),
                },
            }),
        );
    }
    let report = run_backtest(&data, &rf, &config)?;
    if let Some(p) = csv {
        write_periods(p, &[(config.prior.label(), &report)])?;
    }
    emit(
        settings,
        &json!({
            "meta": meta,
            "mean_band_width": report.mean_band_width(),
            "report": report,
        }),
    )
}

/// One row per period and prior: dates, wealth path, band, default
/// probability and weights.
fn write_periods(path: &Path, reports: &[(&str, &BacktestReport)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(io::create(path)?);
    let assets = &reports[0].1.assets;
    let mut header: Vec<String> = [
        "prior",
        "t",
        "date",
        "window_start",
        "window_end",
        "rf",
        "wealth_before",
        "wealth_after",
        "band_lower",
        "band_point",
        "band_upper",
        "default_probability",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(assets.iter().map(|a| format!("w_{a}")));
    let mut rows = vec![header];
    for (label, report) in reports {
        for p in &report.periods {
            let mut row = vec![
                label.to_string(),
                p.t.to_string(),
                p.date.clone(),
                p.window_start.clone(),
                p.window_end.clone(),
                p.rf.to_string(),
                p.wealth_before.to_string(),
                p.wealth_after.to_string(),
                p.band.lower.to_string(),
                p.band.point.to_string(),
                p.band.upper.to_string(),
                p.default_probability.to_string(),
            ];
            row.extend(p.weights.iter().map(|x| x.to_string()));
            rows.push(row);
        }
    }
    for row in rows {
        w.write_record(&row).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

fn check_normality(settings: &Settings) -> Result<(), CliError> {
    let s = single(settings)?;
    let rng = RngStream::new(settings.seed, SAMPLE_STREAM);
    let batch = sample_weights(
        SamplerKind::Fast,
        &s.post,
        &s.ctx,
        settings.draws,
        &Selector::identity(s.post.k()),
        &rng,
    )?;
    let z = standardize_batch(&batch, &s.post, &s.ctx)?;
    let tests = s
        .data
        .assets()
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let col: Vec<f64> = z.column(j).iter().copied().collect();
            let r = normality_check(&col)?;
            Ok(json!({"asset": a, "statistic": r.statistic, "p_value": r.p_value}))
        })
        .collect::<Result<Vec<Value>, MppError>>()?;
    emit(
        settings,
        &json!({
            "meta": s.meta(settings),
            "test": "jarque_bera",
            "window": s.window_json(),
            "coordinates": tests,
        }),
    )
}

/// Fits `m0` and `S0` on the input (or its last `--presample-n` rows). The
/// result's `prior` object can be used directly as a config-file prior.
fn fit_prior(settings: &Settings) -> Result<(), CliError> {
    let data = settings.load_data()?;
    let n = settings.presample_n.unwrap_or(data.n());
    if n > data.n() || n < 2 {
        return Err(MppError::InsufficientData(format!("presample of {n} rows from {} available", data.n())).into());
    }
    let pre = data.rows(data.n() - n, n)?;
    let d0 = settings.d0.unwrap_or(n as f64);
    let r0 = settings.r0.unwrap_or(DEFAULT_R0);
    let (m0, s0) = empirical_bayes_hyperparams(&pre, d0)?;
    let prior = ConjugatePrior {
        m0: m0.iter().copied().collect(),
        r0,
        d0,
        s0,
    };
    prior.validate()?;
    emit(
        settings,
        &json!({
            "meta": settings.meta("empirical_bayes", n, pre.k(), settings.horizon.unwrap_or(1)),
            "assets": pre.assets(),
            "presample": {"start": pre.dates()[0], "end": pre.dates()[n - 1], "rows": n},
            "prior": PriorSpec::Conjugate(prior),
        }),
    )
}
