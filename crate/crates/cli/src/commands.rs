//! The `fit`, `forecast`, `select` and `synth` commands. Each builds all of
//! its outputs in memory and only then writes them.

use std::path::{Path, PathBuf};

use edglm_core::filter::FilterResult;
use edglm_core::forecast::{forecast_path, PredictiveSummary};
use edglm_core::metrics::{evaluate, grid_search, thread_limit, OneStep, PointForecast, ScoreReport};
use edglm_core::modelspec::ModelSpec;
use edglm_core::{Error, Family};
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{num, numbered, read_dataset, write_outputs, Dataset, Table};
use crate::error::{CliError, CliResult};
use crate::synth::simulate;

/// Version of the output file layouts.
pub const SCHEMA_VERSION: u32 = 1;

/// Contents of `metrics.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub family: Family,
    pub discounts: Vec<f64>,
    pub learning: usize,
    pub warm_up: usize,
    pub point_forecast: PointForecast,
    pub level: f64,
    #[serde(flatten)]
    pub score: ScoreReport,
}

#[derive(Debug, Clone)]
pub struct FitOutputs {
    pub filtered: Table,
    pub smoothed: Table,
    pub onestep: Table,
    pub metrics: Metrics,
}

impl FitOutputs {
    pub fn files(&self) -> Vec<(&'static str, String)> {
        vec![
            ("filtered.csv", self.filtered.to_csv()),
            ("smoothed.csv", self.smoothed.to_csv()),
            ("onestep.csv", self.onestep.to_csv()),
            ("metrics.json", metrics_json(&self.metrics)),
        ]
    }
}

fn metrics_json(m: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s
}

fn load(cfg: &RunConfig) -> CliResult<Dataset> {
    let data = cfg.data()?;
    let mut columns = data.covariates.clone();
    for c in cfg.referenced_columns() {
        if !columns.contains(&c) {
            columns.push(c);
        }
    }
    read_dataset(&cfg.resolve(&data.path), &data.target, &columns)
}

fn discounts(spec: &ModelSpec) -> Vec<f64> {
    spec.blocks().map(|b| b.discount).collect()
}

fn fit_model(cfg: &RunConfig) -> CliResult<(ModelSpec, Dataset, FilterResult, Vec<OneStep>, ScoreReport)> {
    let spec = cfg.model_spec()?;
    let data = load(cfg)?;
    let settings = cfg.eval_settings(spec.dim())?;
    let (fr, onestep, score) = evaluate(&spec, &data.y, &data.covariates, &settings)?;
    Ok((spec, data, fr, onestep, score))
}

/// Filtering, smoothing, one-step predictives and scores.
pub fn fit(cfg: &RunConfig) -> CliResult<FitOutputs> {
    let (spec, data, fr, onestep, score) = fit_model(cfg)?;
    let fr = fr.with_smoothing()?;
    let p = spec.dim();

    let mut filtered = Table::new(
        ["t", "y"]
            .into_iter()
            .map(String::from)
            .chain(numbered("a", p))
            .chain(numbered("r", p))
            .chain(["f_1", "f_2", "q_11", "q_12", "q_22", "tau_0", "tau_1", "tau_2"].map(String::from))
            .chain(["tau_star_0", "tau_star_1", "tau_star_2"].map(String::from))
            .chain(numbered("m", p))
            .chain(numbered("c", p)),
    );
    for s in &fr.steps {
        let mut row = vec![s.t.to_string(), num(s.y)];
        row.extend(s.a.iter().map(|&v| num(v)));
        row.extend(s.r.diagonal().iter().map(|&v| num(v)));
        row.extend([s.f[0], s.f[1], s.q[(0, 0)], s.q[(0, 1)], s.q[(1, 1)]].map(num));
        row.extend(s.tau.as_array().map(num));
        row.extend(s.tau_star.as_array().map(num));
        row.extend(s.m.iter().map(|&v| num(v)));
        row.extend(s.c.diagonal().iter().map(|&v| num(v)));
        filtered.push(row);
    }

    let mut smoothed = Table::new(std::iter::once("t".to_string()).chain(numbered("ms", p)).chain(numbered("cs", p)));
    for (s, sm) in fr.steps.iter().zip(fr.smoothed.as_deref().unwrap_or_default()) {
        let mut row = vec![s.t.to_string()];
        row.extend(sm.m.iter().map(|&v| num(v)));
        row.extend(sm.c.diagonal().iter().map(|&v| num(v)));
        smoothed.push(row);
    }

    let mut table = Table::new([
        "t",
        "y",
        "pred_mean",
        "pred_mode",
        "hpd_low",
        "hpd_high",
        "log_pred_density",
        "multimodal",
    ]);
    for o in &onestep {
        table.push(vec![
            o.t.to_string(),
            num(o.y),
            num(o.mean),
            num(o.mode),
            num(o.hpd_low),
            num(o.hpd_high),
            num(o.log_density),
            o.multimodal.to_string(),
        ]);
    }
    // Out-of-sample one-step predictive for the next, unobserved row.
    match forecast_path(&fr, 1, cfg.level, cfg.grid_size, &data.covariates) {
        Ok(next) => {
            let s = &next[0];
            let t = fr.steps.last().map_or(0, |s| s.t) + 1;
            table.push(vec![
                t.to_string(),
                String::new(),
                num(s.mean),
                num(s.mode),
                num(s.hpd_low),
                num(s.hpd_high),
                String::new(),
                s.multimodal.to_string(),
            ]);
        }
        Err(e) if matches!(e.root(), Error::Horizon(_)) => {}
        Err(e) => return Err(e.into()),
    }

    let metrics = Metrics {
        schema_version: SCHEMA_VERSION,
        family: spec.family,
        discounts: discounts(&spec),
        learning: cfg.learning,
        warm_up: fr.warm_up,
        point_forecast: cfg.point_forecast,
        level: cfg.level,
        score,
    };
    Ok(FitOutputs {
        filtered,
        smoothed,
        onestep: table,
        metrics,
    })
}

fn summary_row(h: usize, s: &PredictiveSummary) -> Vec<String> {
    vec![h.to_string(), num(s.mean), num(s.mode), num(s.hpd_low), num(s.hpd_high)]
}

/// Predictive summaries for `h = 1..=horizon` after the last observation.
pub fn forecast(cfg: &RunConfig) -> CliResult<Table> {
    let spec = cfg.model_spec()?;
    let data = load(cfg)?;
    let settings = cfg.eval_settings(spec.dim())?;
    let fr = edglm_core::filter::filter_pass(&spec, &data.y, &data.covariates, &settings.init, &settings.weights)?;
    let path = forecast_path(&fr, cfg.horizon, cfg.level, cfg.grid_size, &data.covariates).map_err(|e| {
        if let Error::Horizon(msg) = e.root() {
            CliError::Config(format!(
                "horizon = {} needs covariate values beyond the {} supplied rows ({msg}); lagged regressors limit \
                 the horizon unless future covariate rows (with an empty target) are added to the data",
                cfg.horizon,
                data.covariates.rows()
            ))
        } else {
            e.into()
        }
    })?;
    let mut table = Table::new(["h", "pred_mean", "pred_mode", "hpd_low", "hpd_high"]);
    for (i, s) in path.iter().enumerate() {
        table.push(summary_row(i + 1, s));
    }
    Ok(table)
}

/// Discount grid search; one row per combination in rank order.
pub fn select(cfg: &RunConfig) -> CliResult<Table> {
    let spec = cfg.model_spec()?;
    let (criterion, grid) = cfg.selection()?;
    let data = load(cfg)?;
    let settings = cfg.eval_settings(spec.dim())?;
    let result = grid_search(&spec, grid, &data.y, &data.covariates, &settings, criterion, thread_limit())?;
    let names = block_names(cfg);
    let mut table = Table::new(
        names
            .iter()
            .map(|n| format!("delta_{n}"))
            .chain(["mse", "ll", "lpd", "rank", "status"].map(String::from)),
    );
    for row in &result.rows {
        let mut r: Vec<String> = row.deltas.iter().map(|&d| num(d)).collect();
        match &row.outcome {
            Ok(s) => {
                r.extend([num(s.mse), num(s.ll), num(s.lpd), row.rank.to_string(), "ok".into()]);
            }
            Err(msg) => {
                r.extend([String::new(), String::new(), String::new(), row.rank.to_string(), format!("error: {msg}")]);
            }
        }
        table.push(r);
    }
    Ok(table)
}

/// `mean_1 …` then `precision_1 …`.
fn block_names(cfg: &RunConfig) -> Vec<String> {
    numbered("mean", cfg.mean_blocks.len())
        .into_iter()
        .chain(numbered("precision", cfg.precision_blocks.len()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SynthOutputs {
    pub data: Table,
    pub truth: Table,
}

/// Synthetic series (`t, y`) and its hidden truth (`t, beta_*, mu, phi`).
pub fn synth(cfg: &RunConfig, seed: Option<u64>) -> CliResult<SynthOutputs> {
    let spec = cfg.model_spec()?;
    let length = cfg
        .synth
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [synth] section (length)".into()))?
        .length;
    let beta0 = cfg.synth_beta0(spec.dim())?;
    let sim = simulate(&spec, &beta0, length, seed.unwrap_or(cfg.seed))?;
    let target = cfg.data.as_ref().map_or("y", |d| d.target.as_str());
    let mut data = Table::new(["t", target]);
    let mut truth = Table::new(
        std::iter::once("t".to_string())
            .chain(numbered("beta", spec.dim()))
            .chain(["mu", "phi"].map(String::from)),
    );
    for (i, y) in sim.y.iter().enumerate() {
        data.push(vec![(i + 1).to_string(), num(*y)]);
        let mut row = vec![(i + 1).to_string()];
        row.extend(sim.states[i].iter().map(|&v| num(v)));
        row.extend([num(sim.mu[i]), num(sim.phi[i])]);
        truth.push(row);
    }
    Ok(SynthOutputs { data, truth })
}

/// Output directory: `--out`, else the config's `output`, else `.`.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    match (out, &cfg.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => cfg.resolve(o),
        (None, None) => PathBuf::from("."),
    }
}

pub fn run_fit(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let outputs = fit(cfg)?;
    write_outputs(out, &outputs.files())
}

pub fn run_forecast(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let table = forecast(cfg)?;
    write_outputs(out, &[("forecast.csv", table.to_csv())])
}

pub fn run_select(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let table = select(cfg)?;
    write_outputs(out, &[("selection.csv", table.to_csv())])
}

pub fn run_synth(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> CliResult<Vec<PathBuf>> {
    let s = synth(cfg, seed)?;
    let name = cfg
        .data
        .as_ref()
        .and_then(|d| d.path.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or("data.csv")
        .to_string();
    write_outputs(out, &[(name.as_str(), s.data.to_csv()), ("truth.csv", s.truth.to_csv())])
}
