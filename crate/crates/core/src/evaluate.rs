//! Pairwise model comparison on breach indicators: comp values, paired
//! t-tests, dominance, and the tables built from them.

use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::backtest::{breach_costs, span_years, Accounting, BreachRecord, CostSummary};
use crate::error::{Error, Result};

/// Breach indicators of one model on an ordered calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachSet {
    pub model: String,
    pub dates: Vec<NaiveDate>,
    pub breached: Vec<bool>,
}

impl BreachSet {
    pub fn new(model: impl Into<String>, dates: Vec<NaiveDate>, breached: Vec<bool>) -> Result<Self> {
        if dates.len() != breached.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: breached.len(),
            });
        }
        Ok(Self {
            model: model.into(),
            dates,
            breached,
        })
    }

    /// Indicators of `model` for one asset and level, restricted to
    /// `calendar` (dates without a record are an error).
    pub fn from_records(records: &[BreachRecord], model: &str, asset: &str, level: f64, calendar: &[NaiveDate]) -> Result<Self> {
        let by_date: HashMap<NaiveDate, bool> = records
            .iter()
            .filter(|r| r.model == model && r.asset == asset && r.level == level)
            .map(|r| (r.date, r.breached))
            .collect();
        let breached = calendar
            .iter()
            .map(|d| {
                by_date
                    .get(d)
                    .copied()
                    .ok_or_else(|| Error::Calendar(format!("{model} has no {asset} record at level {level} on {d}")))
            })
            .collect::<Result<Vec<_>>>()?;
        BreachSet::new(model, calendar.to_vec(), breached)
    }

    pub fn count(&self) -> usize {
        self.breached.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

fn check_aligned(a: &BreachSet, b: &BreachSet) -> Result<()> {
    if a.dates != b.dates {
        let sa: BTreeSet<_> = a.dates.iter().collect();
        let sb: BTreeSet<_> = b.dates.iter().collect();
        let diff: Vec<String> = sa.symmetric_difference(&sb).take(10).map(|d| d.to_string()).collect();
        return Err(Error::Calendar(format!(
            "{} and {} differ on dates [{}]",
            a.model,
            b.model,
            diff.join(", ")
        )));
    }
    Ok(())
}

/// 1.0 if `a` has fewer breaches than `b`, 0.0 if more, 0.5 on a tie.
pub fn comp_value(a: &BreachSet, b: &BreachSet) -> Result<f64> {
    check_aligned(a, b)?;
    Ok(match a.count().cmp(&b.count()) {
        std::cmp::Ordering::Less => 1.0,
        std::cmp::Ordering::Greater => 0.0,
        std::cmp::Ordering::Equal => 0.5,
    })
}

/// Student-t CDF through the regularized incomplete beta function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    #[default]
    Two,
    /// Alternative: the first model breaches less often.
    Less,
}

/// Paired t-test on the per-date indicator differences `a_t - b_t`.
/// Zero variance of the differences gives p = 1.
pub fn paired_t_test(a: &BreachSet, b: &BreachSet, sided: Sided) -> Result<f64> {
    check_aligned(a, b)?;
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let d: Vec<f64> = a
        .breached
        .iter()
        .zip(&b.breached)
        .map(|(x, y)| f64::from(u8::from(*x)) - f64::from(u8::from(*y)))
        .collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        return Ok(1.0);
    }
    let t = mean * nf.sqrt() / var.sqrt();
    let df = nf - 1.0;
    Ok(match sided {
        Sided::Two => beta_reg(df / 2.0, 0.5, df / (df + t * t)),
        Sided::Less => student_t_cdf(t, df),
    })
}

/// `|dates(a) ∩ dates(b)| / |dates(a)| - 1`; absent when `a` never breaches.
pub fn dominance(a: &BreachSet, b: &BreachSet) -> Result<Option<f64>> {
    check_aligned(a, b)?;
    let count = a.count();
    if count == 0 {
        return Ok(None);
    }
    let both = a.breached.iter().zip(&b.breached).filter(|(x, y)| **x && **y).count();
    Ok(Some(both as f64 / count as f64 - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub row: String,
    pub col: String,
    pub comp: f64,
    pub pvalue: f64,
    pub dom: Option<f64>,
}

pub fn compare_pair(a: &BreachSet, b: &BreachSet, sided: Sided) -> Result<ComparisonCell> {
    Ok(ComparisonCell {
        row: a.model.clone(),
        col: b.model.clone(),
        comp: comp_value(a, b)?,
        pvalue: paired_t_test(a, b, sided)?,
        dom: dominance(a, b)?,
    })
}

/// Off-diagonal cells, row-major in the order of `sets`.
pub fn comparison_matrix(sets: &[BreachSet], sided: Sided) -> Result<Vec<ComparisonCell>> {
    let mut cells = Vec::new();
    for a in sets {
        for b in sets {
            if a.model != b.model {
                cells.push(compare_pair(a, b, sided)?);
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachCount {
    pub model: String,
    pub breaches: usize,
    pub observations: usize,
    pub perc: f64,
}

/// All comparisons for one asset at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPanel {
    pub asset: String,
    pub level: f64,
    pub observations: usize,
    /// Dates dropped because some model has no estimate there.
    pub dropped_dates: usize,
    pub counts: Vec<BreachCount>,
    pub cells: Vec<ComparisonCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<String>,
    pub years: f64,
    pub panels: Vec<ComparisonPanel>,
    pub costs: Vec<CostSummary>,
}

fn first_appearance<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Breach counts, pairwise cells and cost tables for every (asset, level).
/// Each panel uses the dates on which every model has an estimate.
pub fn comparison_report(records: &[BreachRecord], accounting: Accounting, sided: Sided) -> Result<ComparisonReport> {
    let models = first_appearance(records.iter().map(|r| r.model.clone()));
    if models.len() < 2 {
        return Err(Error::Config(format!(
            "need at least two models to compare, got {}",
            models.len()
        )));
    }
    let keys = first_appearance(records.iter().map(|r| (r.asset.clone(), r.level)));
    let mut panels = Vec::with_capacity(keys.len());
    for (asset, level) in keys {
        let mut per_model: Vec<BTreeSet<NaiveDate>> = vec![BTreeSet::new(); models.len()];
        for r in records.iter().filter(|r| r.asset == asset && r.level == level) {
            let m = models.iter().position(|m| *m == r.model).expect("model listed");
            per_model[m].insert(r.date);
        }
        let all: BTreeSet<NaiveDate> = per_model.iter().flatten().copied().collect();
        let common: Vec<NaiveDate> = all
            .iter()
            .filter(|d| per_model.iter().all(|s| s.contains(d)))
            .copied()
            .collect();
        let sets = models
            .iter()
            .map(|m| BreachSet::from_records(records, m, &asset, level, &common))
            .collect::<Result<Vec<_>>>()?;
        let counts = sets
            .iter()
            .map(|s| BreachCount {
                model: s.model.clone(),
                breaches: s.count(),
                observations: s.len(),
                perc: if s.is_empty() {
                    0.0
                } else {
                    s.count() as f64 / s.len() as f64
                },
            })
            .collect();
        let cells = if common.len() >= 2 {
            comparison_matrix(&sets, sided)?
        } else {
            Vec::new()
        };
        panels.push(ComparisonPanel {
            asset,
            level,
            observations: common.len(),
            dropped_dates: all.len() - common.len(),
            counts,
            cells,
        });
    }
    let years = span_years(records);
    let costs = if years > 0.0 {
        breach_costs(records, years, accounting)?
    } else {
        Vec::new()
    };
    Ok(ComparisonReport {
        models,
        years,
        panels,
        costs,
    })
}

/// Joins result sets from separate runs. Model ids must be distinct and
/// all runs must cover the same evaluation dates.
pub fn merge_results(runs: Vec<Vec<BreachRecord>>) -> Result<Vec<BreachRecord>> {
    let calendars: Vec<BTreeSet<NaiveDate>> = runs.iter().map(|r| r.iter().map(|x| x.date).collect()).collect();
    for (i, cal) in calendars.iter().enumerate().skip(1) {
        if *cal != calendars[0] {
            let diff: Vec<String> = cal
                .symmetric_difference(&calendars[0])
                .take(10)
                .map(|d| d.to_string())
                .collect();
            return Err(Error::Calendar(format!(
                "result set {} differs from the first on dates [{}]",
                i + 1,
                diff.join(", ")
            )));
        }
    }
    let mut seen: Vec<String> = Vec::new();
    for run in &runs {
        let ids = first_appearance(run.iter().map(|r| r.model.clone()));
        if let Some(dup) = ids.iter().find(|m| seen.contains(m)) {
            return Err(Error::Config(format!("model '{dup}' appears in more than one result set")));
        }
        seen.extend(ids);
    }
    Ok(runs.into_iter().flatten().collect())
}

/// Asset class of an asset named `region:class`; the whole name otherwise.
pub fn asset_class(asset: &str) -> &str {
    asset.rsplit(':').next().unwrap_or(asset)
}

/// Summed comp values of two runs of the same models, per level and asset
/// class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompTotal {
    pub level: f64,
    pub class: String,
    pub first: f64,
    pub second: f64,
    pub comparisons: usize,
}

/// Compares every (model, asset, level) present in both runs on their
/// common dates and adds up the comp values by level and asset class.
pub fn comp_totals(first: &[BreachRecord], second: &[BreachRecord]) -> Result<Vec<CompTotal>> {
    let keys = first_appearance(first.iter().map(|r| (r.model.clone(), r.asset.clone(), r.level)));
    let mut totals: Vec<CompTotal> = Vec::new();
    for (model, asset, level) in keys {
        let dates = |rs: &[BreachRecord]| -> BTreeSet<NaiveDate> {
            rs.iter()
                .filter(|r| r.model == model && r.asset == asset && r.level == level)
                .map(|r| r.date)
                .collect()
        };
        let other = dates(second);
        if other.is_empty() {
            continue;
        }
        let common: Vec<NaiveDate> = dates(first).intersection(&other).copied().collect();
        if common.is_empty() {
            return Err(Error::Calendar(format!(
                "{model} {asset} {level}: no common evaluation dates"
            )));
        }
        let a = BreachSet::from_records(first, &model, &asset, level, &common)?;
        let b = BreachSet::from_records(second, &model, &asset, level, &common)?;
        let comp = comp_value(&a, &b)?;
        let class = asset_class(&asset).to_string();
        let idx = match totals.iter().position(|t| t.level == level && t.class == class) {
            Some(i) => i,
            None => {
                totals.push(CompTotal {
                    level,
                    class,
                    first: 0.0,
                    second: 0.0,
                    comparisons: 0,
                });
                totals.len() - 1
            }
        };
        totals[idx].first += comp;
        totals[idx].second += 1.0 - comp;
        totals[idx].comparisons += 1;
    }
    Ok(totals)
}
