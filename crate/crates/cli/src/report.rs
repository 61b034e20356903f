//! Plain-text renderings of reports.

use std::fmt::Write as _;

use regime_var::evaluate::CompTotal;
use regime_var::market::{quantile_sorted, QUANTILE_LEVELS};
use regime_var::{ComparisonReport, Matrix, PriceSeries, StatsSummary};
use serde::Serialize;

use crate::CliResult;

pub fn json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value).map_err(anyhow::Error::from)? + "\n")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn stats_csv(panels: &[StatsSummary]) -> String {
    let mut s = String::from("frequency,asset,count,mean,std_dev,skewness,min,max");
    for p in QUANTILE_LEVELS {
        write!(s, ",q{}", p * 100.0).unwrap();
    }
    s.push('\n');
    for panel in panels {
        let freq = serde_json::to_value(panel.frequency)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        for a in &panel.assets {
            write!(
                s,
                "{freq},{},{},{},{},{},{},{}",
                a.asset, a.count, a.mean, a.std_dev, a.skewness, a.min, a.max
            )
            .unwrap();
            for (_, q) in &a.quantiles {
                write!(s, ",{q}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn counts_csv(rep: &ComparisonReport) -> String {
    let mut s = String::from("asset,level,model,breaches,observations,perc\n");
    for p in &rep.panels {
        for c in &p.counts {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                p.asset, p.level, c.model, c.breaches, c.observations, c.perc
            )
            .unwrap();
        }
    }
    s
}

pub fn matrix_csv(rep: &ComparisonReport) -> String {
    let mut s = String::from("asset,level,row,col,comp,pvalue,dom\n");
    for p in &rep.panels {
        for c in &p.cells {
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                p.asset,
                p.level,
                c.row,
                c.col,
                c.comp,
                c.pvalue,
                opt(c.dom)
            )
            .unwrap();
        }
    }
    s
}

pub fn costs_csv(rep: &ComparisonReport) -> String {
    let mut s = String::from("model,asset,level,breaches,acc_loss_per_year,avg_loss_per_breach\n");
    for c in &rep.costs {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            c.model,
            c.asset,
            c.level,
            c.breaches,
            c.accumulated_per_year,
            opt(c.average_per_breach)
        )
        .unwrap();
    }
    s
}

pub fn totals_csv(totals: &[CompTotal]) -> String {
    let mut s = String::from("level,class,first,second,comparisons\n");
    for t in totals {
        writeln!(s, "{},{},{},{},{}", t.level, t.class, t.first, t.second, t.comparisons).unwrap();
    }
    s
}

pub fn path_csv(assets: &[String], path: &Matrix) -> String {
    let mut s = format!("day,{}\n", assets.join(","));
    for (t, row) in path.iter_rows().enumerate() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(s, "{},{}", t + 1, cells.join(",")).unwrap();
    }
    let total = regime_var::market::compound(path, 0..path.rows());
    let cells: Vec<String> = total.iter().map(f64::to_string).collect();
    writeln!(s, "total,{}", cells.join(",")).unwrap();
    s
}

pub fn prices_csv(prices: &PriceSeries) -> String {
    let mut s = format!("date,{}\n", prices.asset_names().join(","));
    for (d, row) in prices.dates().iter().zip(prices.levels().iter_rows()) {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(s, "{d},{}", cells.join(",")).unwrap();
    }
    s
}

/// Quantiles of simulated horizon returns per asset.
#[derive(Debug, Serialize)]
pub struct QuantileTable {
    pub paths: usize,
    pub assets: Vec<AssetQuantiles>,
}

#[derive(Debug, Serialize)]
pub struct AssetQuantiles {
    pub asset: String,
    pub mean: f64,
    pub quantiles: Vec<(f64, f64)>,
}

impl QuantileTable {
    pub fn new(assets: &[String], sims: &Matrix, levels: &[f64]) -> Self {
        let assets = assets
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let mut col = sims.column(j);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                col.sort_by(f64::total_cmp);
                AssetQuantiles {
                    asset: name.clone(),
                    mean,
                    quantiles: levels.iter().map(|&a| (a, quantile_sorted(&col, a))).collect(),
                }
            })
            .collect();
        Self {
            paths: sims.rows(),
            assets,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("asset,paths,mean");
        if let Some(a) = self.assets.first() {
            for (level, _) in &a.quantiles {
                write!(s, ",q{level}").unwrap();
            }
        }
        s.push('\n');
        for a in &self.assets {
            write!(s, "{},{},{}", a.asset, self.paths, a.mean).unwrap();
            for (_, q) in &a.quantiles {
                write!(s, ",{q}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}
