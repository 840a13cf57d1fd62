//! One-step-ahead scoring (MSE, LL, LPD) with a learning period, and
//! discount-factor grid search with deterministic ranking.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{filter_pass, FilterResult, StateMoments, Weights};
use crate::forecast::{predictive_summary, Predictive};
use crate::modelspec::{Covariates, ModelSpec};

/// Environment variable capping the number of concurrent grid cells.
pub const THREADS_ENV: &str = "EDGLM_THREADS";

/// Point forecast entering the MSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointForecast {
    #[default]
    Mean,
    Mode,
}

/// One-step-ahead predictive summary at time `t` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneStep {
    pub t: usize,
    pub y: f64,
    pub mean: f64,
    pub mode: f64,
    pub hpd_low: f64,
    pub hpd_high: f64,
    pub multimodal: bool,
    /// `log p(y_t | D_{t−1})`.
    pub log_density: f64,
}

impl OneStep {
    pub fn point(&self, point: PointForecast) -> f64 {
        match point {
            PointForecast::Mean => self.mean,
            PointForecast::Mode => self.mode,
        }
    }

    pub fn covers(&self) -> bool {
        self.hpd_low <= self.y && self.y <= self.hpd_high
    }

    pub fn width(&self) -> f64 {
        self.hpd_high - self.hpd_low
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreReport {
    pub mse: f64,
    /// Plug-in log-likelihood at the posterior point estimates.
    pub ll: f64,
    /// Sum of one-step log predictive densities.
    pub lpd: f64,
    pub n_scored: usize,
    pub learning_excluded: usize,
}

/// One-step predictives of every filtered step, from its equated prior `τ_t`.
pub fn one_step_forecasts(fr: &FilterResult, level: f64, grid_size: usize) -> Result<Vec<OneStep>> {
    let family = fr.model.family;
    fr.steps
        .iter()
        .map(|s| {
            let summary = predictive_summary(family, &s.tau, level, grid_size).map_err(|e| e.at(s.t, "predictive"))?;
            let log_density = Predictive::new(family, s.tau)
                .and_then(|p| p.log_density(s.y))
                .map_err(|e| e.at(s.t, "predictive"))?;
            Ok(OneStep {
                t: s.t,
                y: s.y,
                mean: summary.mean,
                mode: summary.mode,
                hpd_low: summary.hpd_low,
                hpd_high: summary.hpd_high,
                multimodal: summary.multimodal,
                log_density,
            })
        })
        .collect()
}

/// Scores the steps with `t > learning`. `onestep` must come from
/// [`one_step_forecasts`] on the same filter result.
pub fn score(fr: &FilterResult, onestep: &[OneStep], learning: usize, point: PointForecast) -> Result<ScoreReport> {
    let total = fr.warm_up + fr.steps.len();
    if learning >= total {
        return Err(Error::Config(format!(
            "learning period {learning} must be shorter than the series ({total} observations)"
        )));
    }
    if onestep.len() != fr.steps.len() || onestep.iter().zip(&fr.steps).any(|(o, s)| o.t != s.t) {
        return Err(Error::Structural("one-step forecasts do not match the filter steps".into()));
    }
    let family = fr.model.family;
    let (mut sse, mut ll, mut lpd, mut n, mut excluded) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for (s, o) in fr.steps.iter().zip(onestep) {
        if s.t <= learning {
            excluded += 1;
            continue;
        }
        let e = s.y - o.point(point);
        sse += e * e;
        lpd += o.log_density;
        let eta = family.prior_moment_map(&s.tau_star).map_err(|e| e.at(s.t, "score"))?.f;
        let (mu, phi) = family.inv_link(&eta).map_err(|e| e.at(s.t, "score"))?;
        ll += family.log_density(s.y, mu, phi).map_err(|e| e.at(s.t, "score"))?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config(format!("learning period {learning} leaves no step to score")));
    }
    let report = ScoreReport {
        mse: sse / n as f64,
        ll,
        lpd,
        n_scored: n,
        learning_excluded: excluded,
    };
    if !(report.mse.is_finite() && report.ll.is_finite() && report.lpd.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {report:?}")));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Criterion {
    Mse,
    Ll,
    Lpd,
}

impl Criterion {
    pub fn value(&self, r: &ScoreReport) -> f64 {
        match self {
            Criterion::Mse => r.mse,
            Criterion::Ll => r.ll,
            Criterion::Lpd => r.lpd,
        }
    }

    /// Ordering of two scores from best to worst.
    fn compare(&self, a: &ScoreReport, b: &ScoreReport) -> Ordering {
        let (x, y) = (self.value(a), self.value(b));
        match self {
            Criterion::Mse => x.total_cmp(&y),
            Criterion::Ll | Criterion::Lpd => y.total_cmp(&x),
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Criterion::Mse),
            "ll" => Ok(Criterion::Ll),
            "lpd" => Ok(Criterion::Lpd),
            other => Err(Error::Config(format!("unknown criterion {other:?} (expected MSE, LL or LPD)"))),
        }
    }
}

/// Settings shared by every grid cell.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub init: StateMoments,
    pub weights: Weights,
    pub learning: usize,
    pub level: f64,
    pub grid_size: usize,
    pub point: PointForecast,
}

#[derive(Debug, Clone)]
pub struct GridRow {
    /// One discount per block (mean blocks first).
    pub deltas: Vec<f64>,
    /// Score or the message of the error that stopped this cell.
    pub outcome: std::result::Result<ScoreReport, String>,
    /// 1-based rank under the search criterion; failed cells rank last.
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub criterion: Criterion,
    /// Rows in rank order.
    pub rows: Vec<GridRow>,
}

impl GridSearchResult {
    pub fn best(&self) -> Option<&GridRow> {
        self.rows.first().filter(|r| r.outcome.is_ok())
    }
}

/// Filters, forecasts and scores one model.
pub fn evaluate(
    spec: &ModelSpec,
    y: &[f64],
    covariates: &Covariates,
    settings: &EvalSettings,
) -> Result<(FilterResult, Vec<OneStep>, ScoreReport)> {
    let fr = filter_pass(spec, y, covariates, &settings.init, &settings.weights)?;
    let onestep = one_step_forecasts(&fr, settings.level, settings.grid_size)?;
    let report = score(&fr, &onestep, settings.learning, settings.point)?;
    Ok((fr, onestep, report))
}

/// Cartesian product of per-block discount sets, in lexical order.
pub fn grid_cells(grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut cells = vec![Vec::new()];
    for values in grid {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        cells = cells
            .into_iter()
            .flat_map(|c| {
                sorted.iter().map(move |&v| {
                    let mut next = c.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    cells
}

/// Concurrency cap from [`THREADS_ENV`], defaulting to the available cores.
pub fn thread_limit() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs every discount combination of `grid` (one value set per block) and
/// ranks the results by `criterion`; ties go to the lexically smaller
/// combination. Results do not depend on `threads`.
pub fn grid_search(
    template: &ModelSpec,
    grid: &[Vec<f64>],
    y: &[f64],
    covariates: &Covariates,
    settings: &EvalSettings,
    criterion: Criterion,
    threads: usize,
) -> Result<GridSearchResult> {
    if grid.len() != template.n_blocks() {
        return Err(Error::Config(format!(
            "discount grid has {} value sets but the model has {} blocks",
            grid.len(),
            template.n_blocks()
        )));
    }
    if grid.iter().any(|g| g.is_empty()) {
        return Err(Error::Config("every block needs at least one discount value".into()));
    }
    let cells = grid_cells(grid);
    let run = |deltas: &Vec<f64>| -> std::result::Result<ScoreReport, String> {
        template
            .with_discounts(deltas)
            .and_then(|spec| evaluate(&spec, y, covariates, settings))
            .map(|(_, _, r)| r)
            .map_err(|e| e.to_string())
    };

    let threads = threads.clamp(1, cells.len());
    let mut outcomes: Vec<Option<std::result::Result<ScoreReport, String>>> = vec![None; cells.len()];
    if threads == 1 {
        for (slot, deltas) in outcomes.iter_mut().zip(&cells) {
            *slot = Some(run(deltas));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(&mut outcomes);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= cells.len() {
                        break;
                    }
                    let r = run(&cells[i]);
                    results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
                });
            }
        });
    }

    let mut rows: Vec<GridRow> = cells
        .into_iter()
        .zip(outcomes)
        .map(|(deltas, outcome)| GridRow {
            deltas,
            outcome: outcome.expect("every cell is evaluated"),
            rank: 0,
        })
        .collect();
    rank_rows(&mut rows, criterion);
    Ok(GridSearchResult { criterion, rows })
}

/// Sorts best first (failed cells last, ties by ascending lexical δ) and
/// assigns ranks.
fn rank_rows(rows: &mut [GridRow], criterion: Criterion) {
    rows.sort_by(|a, b| {
        let by_score = match (&a.outcome, &b.outcome) {
            (Ok(x), Ok(y)) => criterion.compare(x, y),
            (Ok(_), Err(_)) => Ordering::Less,
            (Err(_), Ok(_)) => Ordering::Greater,
            (Err(_), Err(_)) => Ordering::Equal,
        };
        by_score.then_with(|| lexical(&a.deltas, &b.deltas))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
}

fn lexical(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}
