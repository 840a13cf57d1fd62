//! Declarative run configuration (TOML).
//!
//! ```toml
//! family = "beta"
//! learning = 18
//! horizon = 12
//! level = 0.95
//!
//! [data]
//! path = "series.csv"
//! target = "y"
//!
//! [[mean_blocks]]
//! type = "polynomial"
//! order = 2
//! discount = 0.90
//!
//! [[mean_blocks]]
//! type = "harmonic"
//! period = 12
//! discount = 0.95
//!
//! [[precision_blocks]]
//! type = "polynomial"
//! order = 1
//! discount = 0.90
//!
//! [select]
//! criterion = "lpd"
//! grid = [[0.90, 0.95], [0.95], [0.90, 0.95]]
//! ```

use std::path::{Path, PathBuf};

use edglm_core::filter::{StateMoments, Weights};
use edglm_core::forecast::{DEFAULT_GRID_SIZE, MIN_GRID_SIZE};
use edglm_core::metrics::{Criterion, EvalSettings, PointForecast};
use edglm_core::modelspec::{harmonic_block, polynomial_block, regression_block, Block, BlockKind, ModelSpec};
use edglm_core::Family;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    pub data: Option<DataConfig>,
    pub mean_blocks: Vec<BlockConfig>,
    pub precision_blocks: Vec<BlockConfig>,
    #[serde(default)]
    pub prior: PriorConfig,
    /// Weight matrix Ω of the moment-equating objective (4×4).
    pub weights: Option<Vec<Vec<f64>>>,
    /// Observations excluded from scoring.
    #[serde(default)]
    pub learning: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub point_forecast: PointForecast,
    pub select: Option<SelectConfig>,
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory (overridden by `--out`).
    pub output: Option<PathBuf>,
    /// Directory of the configuration file; relative paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_horizon() -> usize {
    1
}

fn default_level() -> f64 {
    0.95
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub target: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

/// One block; `type` is `polynomial` (`order`), `harmonic` (`omega` or
/// `period`) or `regression` (`columns`, `lags`, `intercept`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    #[serde(rename = "type")]
    pub kind: String,
    pub order: Option<usize>,
    pub omega: Option<f64>,
    pub period: Option<f64>,
    pub columns: Option<Vec<String>>,
    pub lags: Option<usize>,
    pub intercept: Option<bool>,
    pub discount: Option<f64>,
    pub w: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub m0: Option<Vec<f64>>,
    pub c0: Option<Vec<Vec<f64>>>,
    pub c0_diag: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    #[serde(default = "default_criterion")]
    pub criterion: String,
    /// One discount value set per block (mean blocks first).
    pub grid: Vec<Vec<f64>>,
}

fn default_criterion() -> String {
    "lpd".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of observations to generate.
    pub length: usize,
    /// Initial state; defaults to `prior.m0`.
    pub beta0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!("level = {} must lie in (0, 1)", self.level)));
        }
        if self.grid_size < MIN_GRID_SIZE {
            return Err(CliError::Config(format!(
                "grid_size = {} is below the minimum of {MIN_GRID_SIZE}",
                self.grid_size
            )));
        }
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        self.model_spec()?;
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn data(&self) -> CliResult<&DataConfig> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [data] section (path, target)".into()))
    }

    pub fn model_spec(&self) -> CliResult<ModelSpec> {
        let mean = blocks("mean_blocks", &self.mean_blocks)?;
        let precision = blocks("precision_blocks", &self.precision_blocks)?;
        Ok(ModelSpec::new(self.family, mean, precision)?)
    }

    /// Covariate columns referenced by regression blocks, in first-use order.
    pub fn referenced_columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for b in self.mean_blocks.iter().chain(&self.precision_blocks) {
            for c in b.columns.iter().flatten() {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    pub fn initial_state(&self, dim: usize) -> CliResult<StateMoments> {
        let m = match &self.prior.m0 {
            Some(v) if v.len() != dim => {
                return Err(CliError::Config(format!("prior.m0 has {} entries, the model needs {dim}", v.len())))
            }
            Some(v) => DVector::from_vec(v.clone()),
            None => DVector::zeros(dim),
        };
        let c = match (&self.prior.c0, &self.prior.c0_diag) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either prior.c0 or prior.c0_diag, not both".into())),
            (Some(rows), None) => matrix("prior.c0", rows, dim)?,
            (None, Some(d)) if d.len() != dim => {
                return Err(CliError::Config(format!(
                    "prior.c0_diag has {} entries, the model needs {dim}",
                    d.len()
                )))
            }
            (None, Some(d)) => DMatrix::from_diagonal(&DVector::from_vec(d.clone())),
            (None, None) => DMatrix::identity(dim, dim),
        };
        StateMoments::new(m, c).map_err(|e| CliError::Config(format!("prior: {e}")))
    }

    pub fn weights(&self) -> CliResult<Weights> {
        match &self.weights {
            None => Ok(Weights::identity()),
            Some(rows) => {
                let m = matrix("weights", rows, 4)?;
                Ok(Weights::from_fn(|i, j| m[(i, j)]))
            }
        }
    }

    pub fn eval_settings(&self, dim: usize) -> CliResult<EvalSettings> {
        Ok(EvalSettings {
            init: self.initial_state(dim)?,
            weights: self.weights()?,
            learning: self.learning,
            level: self.level,
            grid_size: self.grid_size,
            point: self.point_forecast,
        })
    }

    pub fn selection(&self) -> CliResult<(Criterion, &[Vec<f64>])> {
        let sel = self
            .select
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [select] section (grid, criterion)".into()))?;
        let criterion = sel
            .criterion
            .parse::<Criterion>()
            .map_err(|e| CliError::Config(format!("select.criterion: {e}")))?;
        Ok((criterion, &sel.grid))
    }

    /// Initial state of the generator, per block order.
    pub fn synth_beta0(&self, dim: usize) -> CliResult<DVector<f64>> {
        let given = self.synth.as_ref().and_then(|s| s.beta0.as_ref()).or(self.prior.m0.as_ref());
        match given {
            Some(v) if v.len() != dim => Err(CliError::Config(format!(
                "synth.beta0 has {} entries, the model needs {dim}",
                v.len()
            ))),
            Some(v) => Ok(DVector::from_vec(v.clone())),
            None => Ok(DVector::zeros(dim)),
        }
    }
}

fn matrix(field: &str, rows: &[Vec<f64>], n: usize) -> CliResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("{field} must be a {n}×{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn blocks(field: &str, configs: &[BlockConfig]) -> CliResult<Vec<Block>> {
    configs
        .iter()
        .enumerate()
        .map(|(i, b)| block(&format!("{field}[{i}]"), b))
        .collect()
}

fn block(field: &str, b: &BlockConfig) -> CliResult<Block> {
    let err = |msg: String| CliError::Config(format!("{field}: {msg}"));
    let unexpected = |name: &str, present: bool| -> CliResult<()> {
        if present {
            Err(err(format!("`{name}` does not apply to a {} block", b.kind)))
        } else {
            Ok(())
        }
    };
    let mut block = match b.kind.as_str() {
        "polynomial" => {
            unexpected("omega", b.omega.is_some())?;
            unexpected("period", b.period.is_some())?;
            unexpected("columns", b.columns.is_some())?;
            unexpected("lags", b.lags.is_some())?;
            unexpected("intercept", b.intercept.is_some())?;
            let order = b.order.ok_or_else(|| err("polynomial block needs `order`".into()))?;
            polynomial_block(order).map_err(|e| err(e.to_string()))?
        }
        "harmonic" => {
            unexpected("order", b.order.is_some())?;
            unexpected("columns", b.columns.is_some())?;
            unexpected("lags", b.lags.is_some())?;
            unexpected("intercept", b.intercept.is_some())?;
            let omega = match (b.omega, b.period) {
                (Some(w), None) => w,
                (None, Some(p)) if p > 0.0 => 2.0 * std::f64::consts::PI / p,
                (None, Some(p)) => return Err(err(format!("period {p} must be positive"))),
                _ => return Err(err("harmonic block needs exactly one of `omega`, `period`".into())),
            };
            harmonic_block(omega).map_err(|e| err(e.to_string()))?
        }
        "regression" => {
            unexpected("order", b.order.is_some())?;
            unexpected("omega", b.omega.is_some())?;
            unexpected("period", b.period.is_some())?;
            let columns = b.columns.clone().ok_or_else(|| err("regression block needs `columns`".into()))?;
            let names: Vec<&str> = columns.iter().map(String::as_str).collect();
            let mut block = regression_block(&names, b.lags.unwrap_or(1)).map_err(|e| err(e.to_string()))?;
            if let BlockKind::Regression { intercept, .. } = &mut block.kind {
                *intercept = b.intercept.unwrap_or(true);
            }
            block
        }
        other => {
            return Err(err(format!(
                "unknown block type {other:?} (expected polynomial, harmonic or regression)"
            )))
        }
    };
    if let Some(d) = b.discount {
        block = block.with_discount(d);
    }
    if let Some(rows) = &b.w {
        let n = block.dim();
        block = block.with_w(matrix(&format!("{field}.w"), rows, n)?);
    }
    // Surface the block's own validation with the field name.
    ModelSpec::new(Family::Normal, vec![block.clone()], vec![Block::new(BlockKind::Polynomial { order: 1 })])
        .map_err(|e| err(e.to_string()))?;
    Ok(block)
}
