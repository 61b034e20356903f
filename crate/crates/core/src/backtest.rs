//! Moving-window VaR backtest: refit, simulate, threshold, compare with the
//! realized next-period return.

use std::fs::File;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{aggregate, period_spans, quantile_sorted, Period, ReturnSeries};
use crate::matrix::Matrix;
use crate::model::{fit_model, parse_models, FitSettings, FittedModel, ModelSpec};
use crate::rng::derive_seed;
use crate::scenario::simulate_horizon_returns;

/// What a breach costs: the shortfall below the threshold, or the realized
/// return itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accounting {
    #[default]
    Excess,
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub window_days: usize,
    pub horizon_days: usize,
    pub paths: usize,
    pub levels: Vec<f64>,
    pub calendar: Period,
    pub models: Vec<String>,
    pub seed: u64,
    /// Refit every `refit_stride` evaluation dates; in between the last fit
    /// is reused but simulation still starts from the current history.
    pub refit_stride: usize,
    pub accounting: Accounting,
    pub fit: FitSettings,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window_days: 2000,
            horizon_days: 5,
            paths: 100_000,
            levels: vec![0.01, 0.05],
            calendar: Period::Weekly,
            models: vec!["classic".into(), "hmm".into()],
            seed: 0,
            refit_stride: 1,
            accounting: Accounting::Excess,
            fit: FitSettings::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<Vec<ModelSpec>> {
        if self.paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if self.horizon_days == 0 || self.window_days <= self.horizon_days {
            return Err(Error::Config("need 0 < horizon_days < window_days".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|a| !(*a > 0.0 && *a < 0.5)) {
            return Err(Error::Config("levels must lie in (0, 0.5)".into()));
        }
        if let Some(a) = self.levels.iter().find(|a| (self.paths as f64) * **a < 1.0) {
            return Err(Error::Config(format!("{} paths are too few for level {a}", self.paths)));
        }
        if self.refit_stride == 0 {
            return Err(Error::Config("refit_stride must be at least 1".into()));
        }
        let models = parse_models(&self.models)?;
        for m in &models {
            if m.min_history() > self.window_days {
                return Err(Error::Config(format!(
                    "model {m} needs {} days of history, window has {}",
                    m.min_history(),
                    self.window_days
                )));
            }
        }
        Ok(models)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarEstimate {
    /// Last day of the estimation window.
    pub date: NaiveDate,
    /// Last day of the period the estimate covers.
    pub target: NaiveDate,
    pub model: String,
    pub asset: String,
    pub level: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachRecord {
    pub date: NaiveDate,
    pub target: NaiveDate,
    pub model: String,
    pub asset: String,
    pub level: f64,
    pub realized: f64,
    pub threshold: f64,
    pub excess: f64,
    pub breached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub date: NaiveDate,
    pub model: String,
    pub error: String,
}

/// One evaluation date: the window ends at row `last` and the estimate is
/// compared with the compounded returns of rows `next`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPoint {
    pub last: usize,
    pub date: NaiveDate,
    pub next: Range<usize>,
    pub target: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub asset_names: Vec<String>,
    pub models: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub estimates: Vec<VarEstimate>,
    pub breaches: Vec<BreachRecord>,
    pub failures: Vec<FailureRecord>,
}

impl BacktestResult {
    /// Backtest span in years, first evaluation date to last target.
    pub fn years(&self) -> f64 {
        span_years(&self.breaches)
    }
}

pub fn span_years(records: &[BreachRecord]) -> f64 {
    let first = records.iter().map(|r| r.date).min();
    let last = records.iter().map(|r| r.target).max();
    match (first, last) {
        (Some(a), Some(b)) => (b - a).num_days() as f64 / 365.25,
        _ => 0.0,
    }
}

/// No later weekday falls into the same period, so the period is complete.
fn period_closed(period: Period, date: NaiveDate) -> bool {
    let mut next = date + Days::new(1);
    while matches!(next.weekday(), Weekday::Sat | Weekday::Sun) {
        next = next + Days::new(1);
    }
    period.key(next) != period.key(date)
}

/// Period ends with a full window behind them and a complete period after.
pub fn evaluation_schedule(dates: &[NaiveDate], period: Period, window_days: usize) -> Vec<EvalPoint> {
    let spans = period_spans(dates, period);
    let mut out = Vec::new();
    for p in 0..spans.len().saturating_sub(1) {
        let last = spans[p].end - 1;
        let next = spans[p + 1].clone();
        if last + 1 < window_days {
            continue;
        }
        if p + 2 == spans.len() && !period_closed(period, dates[next.end - 1]) {
            continue;
        }
        out.push(EvalPoint {
            last,
            date: dates[last],
            target: dates[next.end - 1],
            next,
        });
    }
    out
}

/// Linear-interpolation `alpha` quantile of simulated horizon returns.
pub fn var_threshold(samples: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("level {alpha} outside (0, 1)")));
    }
    if (samples.len() as f64) * alpha < 1.0 {
        return Err(Error::InsufficientData {
            needed: (1.0 / alpha).ceil() as usize,
            got: samples.len(),
        });
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, alpha))
}

/// Pairs each estimate with the realized return of its target period.
/// `realized` holds period returns stamped with their last business day.
pub fn detect_breaches(estimates: &[VarEstimate], realized: &ReturnSeries) -> Result<Vec<BreachRecord>> {
    estimates
        .iter()
        .map(|e| {
            let row = realized
                .dates()
                .binary_search(&e.target)
                .map_err(|_| Error::Calendar(format!("no realized return for {}", e.target)))?;
            let col = realized
                .asset_names()
                .iter()
                .position(|a| *a == e.asset)
                .ok_or_else(|| Error::Calendar(format!("no realized series for asset {}", e.asset)))?;
            let r = realized.returns().get(row, col);
            Ok(BreachRecord {
                date: e.date,
                target: e.target,
                model: e.model.clone(),
                asset: e.asset.clone(),
                level: e.level,
                realized: r,
                threshold: e.threshold,
                excess: r - e.threshold,
                breached: r < e.threshold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub model: String,
    pub asset: String,
    pub level: f64,
    pub breaches: usize,
    pub accumulated_per_year: f64,
    /// Absent without breaches.
    pub average_per_breach: Option<f64>,
}

/// Accumulated loss per year and average loss per breach for every
/// (model, asset, level) in first-appearance order.
pub fn breach_costs(records: &[BreachRecord], years: f64, accounting: Accounting) -> Result<Vec<CostSummary>> {
    if !(years > 0.0) {
        return Err(Error::Config("backtest span must be positive".into()));
    }
    let mut out: Vec<(CostSummary, f64)> = Vec::new();
    for r in records {
        let idx = match out
            .iter()
            .position(|(c, _)| c.model == r.model && c.asset == r.asset && c.level == r.level)
        {
            Some(i) => i,
            None => {
                out.push((
                    CostSummary {
                        model: r.model.clone(),
                        asset: r.asset.clone(),
                        level: r.level,
                        breaches: 0,
                        accumulated_per_year: 0.0,
                        average_per_breach: None,
                    },
                    0.0,
                ));
                out.len() - 1
            }
        };
        if r.breached {
            let loss = match accounting {
                Accounting::Excess => r.excess,
                Accounting::Realized => r.realized,
            };
            out[idx].0.breaches += 1;
            out[idx].1 += loss;
        }
    }
    Ok(out
        .into_iter()
        .map(|(mut c, total)| {
            c.accumulated_per_year = total / years;
            c.average_per_breach = (c.breaches > 0).then(|| total / c.breaches as f64);
            c
        })
        .collect())
}

enum Cell {
    Estimates(Vec<VarEstimate>),
    Failed(FailureRecord),
}

fn run_block(spec: &ModelSpec, points: &[EvalPoint], data: &ReturnSeries, config: &BacktestConfig) -> Vec<Cell> {
    let returns = data.returns();
    let window = |p: &EvalPoint| returns.slice_rows(p.last + 1 - config.window_days, p.last + 1);
    let fit_tag = points[0].date.to_string();
    let fitted: Result<FittedModel> = fit_model(spec, &window(&points[0]), &config.fit, config.seed, &fit_tag);
    points
        .iter()
        .map(|p| {
            let outcome = fitted
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|model| estimate(spec, model, &window(p), p, data.asset_names(), config).map_err(|e| e.to_string()));
            match outcome {
                Ok(v) => Cell::Estimates(v),
                Err(error) => {
                    log::warn!("{} at {}: {error}", spec.id(), p.date);
                    Cell::Failed(FailureRecord {
                        date: p.date,
                        model: spec.id().to_string(),
                        error,
                    })
                }
            }
        })
        .collect()
}

fn estimate(
    spec: &ModelSpec,
    model: &FittedModel,
    history: &Matrix,
    p: &EvalPoint,
    assets: &[String],
    config: &BacktestConfig,
) -> Result<Vec<VarEstimate>> {
    let sampler = model.sampler(history)?;
    let seed = derive_seed(config.seed, &[spec.id(), &p.date.to_string(), "sim"]);
    let sims = simulate_horizon_returns(sampler.as_ref(), config.horizon_days, config.paths, seed);
    let mut out = Vec::with_capacity(assets.len() * config.levels.len());
    for (j, asset) in assets.iter().enumerate() {
        let mut col = sims.column(j);
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: i,
                context: format!("simulated returns of {asset}"),
            });
        }
        col.sort_by(f64::total_cmp);
        for &level in &config.levels {
            out.push(VarEstimate {
                date: p.date,
                target: p.target,
                model: spec.id().to_string(),
                asset: asset.clone(),
                level,
                threshold: quantile_sorted(&col, level),
            });
        }
    }
    Ok(out)
}

/// Runs every configured model at every evaluation date of `data` (daily
/// returns). Failed (date, model) cells are recorded and left out.
pub fn run_backtest(data: &ReturnSeries, config: &BacktestConfig) -> Result<BacktestResult> {
    let models = config.validate()?;
    let schedule = evaluation_schedule(data.dates(), config.calendar, config.window_days);
    if schedule.is_empty() {
        return Err(Error::InsufficientData {
            needed: config.window_days + config.horizon_days,
            got: data.len(),
        });
    }
    let realized = aggregate(data, config.calendar)?.series;

    let tasks: Vec<(&ModelSpec, &[EvalPoint])> = models
        .iter()
        .flat_map(|m| schedule.chunks(config.refit_stride).map(move |c| (m, c)))
        .collect();
    let cells: Vec<Vec<Cell>> = tasks
        .par_iter()
        .map(|(m, points)| run_block(m, points, data, config))
        .collect();

    // reorder to date-major, model order within a date
    let blocks = schedule.len().div_ceil(config.refit_stride);
    let mut by_model: Vec<Vec<Cell>> = Vec::with_capacity(models.len());
    let mut iter = cells.into_iter();
    for _ in 0..models.len() {
        by_model.push(iter.by_ref().take(blocks).flatten().collect());
    }
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    let mut columns: Vec<_> = by_model.into_iter().map(|v| v.into_iter()).collect();
    for _ in 0..schedule.len() {
        for col in columns.iter_mut() {
            match col.next().expect("one cell per date") {
                Cell::Estimates(v) => estimates.extend(v),
                Cell::Failed(f) => failures.push(f),
            }
        }
    }
    if !failures.is_empty() {
        log::warn!("{} (date, model) cells failed and are excluded", failures.len());
    }
    let breaches = detect_breaches(&estimates, &realized)?;
    Ok(BacktestResult {
        asset_names: data.asset_names().to_vec(),
        models: models.iter().map(|m| m.id().to_string()).collect(),
        dates: schedule.iter().map(|p| p.date).collect(),
        estimates,
        breaches,
        failures,
    })
}

pub const BREACHES_FILE: &str = "breaches.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const FAILURES_FILE: &str = "failures.csv";

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(file);
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes breaches, estimates and failures as CSV into `dir`.
pub fn write_outputs(result: &BacktestResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = [BREACHES_FILE, ESTIMATES_FILE, FAILURES_FILE].map(|f| dir.join(f));
    write_rows(
        &paths[0],
        &result.breaches,
        &[
            "date",
            "target",
            "model",
            "asset",
            "level",
            "realized",
            "threshold",
            "excess",
            "breached",
        ],
    )?;
    write_rows(
        &paths[1],
        &result.estimates,
        &["date", "target", "model", "asset", "level", "threshold"],
    )?;
    write_rows(&paths[2], &result.failures, &["date", "model", "error"])?;
    Ok(paths.to_vec())
}

pub fn read_breaches(path: &Path) -> Result<Vec<BreachRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
