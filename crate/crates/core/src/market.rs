//! Price ingestion, simple returns, business-period calendars and
//! descriptive statistics.

use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probability levels reported by [`descriptive_stats`].
pub const QUANTILE_LEVELS: [f64; 9] = [0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
    Monthly,
}

/// Dated total-return index levels, one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    levels: Matrix,
    asset_names: Vec<String>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, levels: Matrix, asset_names: Vec<String>) -> Result<Self> {
        if levels.rows() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: levels.rows(),
            });
        }
        if levels.cols() != asset_names.len() {
            return Err(Error::DimensionMismatch {
                expected: asset_names.len(),
                got: levels.cols(),
            });
        }
        check_increasing(&dates)?;
        for (r, row) in levels.iter_rows().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Data(format!(
                        "level {v} for {} on {} is not strictly positive",
                        asset_names[c], dates[r]
                    )));
                }
            }
        }
        Ok(Self {
            dates,
            levels,
            asset_names,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn levels(&self) -> &Matrix {
        &self.levels
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Dated simple returns. Row `t` is the return earned over the interval
/// ending at `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    returns: Matrix,
    asset_names: Vec<String>,
    frequency: Frequency,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, returns: Matrix, asset_names: Vec<String>, frequency: Frequency) -> Result<Self> {
        if returns.rows() != dates.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len(),
                got: returns.rows(),
            });
        }
        if returns.cols() != asset_names.len() {
            return Err(Error::DimensionMismatch {
                expected: asset_names.len(),
                got: returns.cols(),
            });
        }
        check_increasing(&dates)?;
        if let Some(pos) = returns.as_slice().iter().position(|&r| !(r > -1.0) || !r.is_finite()) {
            return Err(Error::Data(format!(
                "return {} at row {} is not a valid simple return",
                returns.as_slice()[pos],
                pos / returns.cols().max(1)
            )));
        }
        Ok(Self {
            dates,
            returns,
            asset_names,
            frequency,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }

    /// Rows `range` as a new series.
    pub fn window(&self, range: Range<usize>) -> ReturnSeries {
        ReturnSeries {
            dates: self.dates[range.clone()].to_vec(),
            returns: self.returns.slice_rows(range.start, range.end),
            asset_names: self.asset_names.clone(),
            frequency: self.frequency,
        }
    }

    /// The trailing `n` rows.
    pub fn tail(&self, n: usize) -> ReturnSeries {
        let n = n.min(self.len());
        self.window(self.len() - n..self.len())
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] == pair[0] {
            return Err(Error::DuplicateDate(pair[1]));
        }
        if pair[1] < pair[0] {
            return Err(Error::Data(format!("dates not increasing: {} follows {}", pair[1], pair[0])));
        }
    }
    Ok(())
}

/// Column mapping for delimiter-separated price files.
#[derive(Debug, Clone)]
pub struct PriceSchema {
    pub delimiter: u8,
    /// Header name of the date column; the first column when `None`.
    pub date_column: Option<String>,
    /// Asset columns to keep, in order; every non-date column when `None`.
    pub assets: Option<Vec<String>>,
}

impl Default for PriceSchema {
    fn default() -> Self {
        Self {
            delimiter: b',',
            date_column: None,
            assets: None,
        }
    }
}

pub fn load_price_series(path: impl AsRef<Path>, schema: &PriceSchema) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_price_series(file, schema)
}

/// Parse a price table from any reader. Row numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn read_price_series<R: Read>(reader: R, schema: &PriceSchema) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();

    let date_idx = match &schema.date_column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing date column '{name}'")))?,
        None if !headers.is_empty() => 0,
        None => return Err(Error::Schema("empty header row".into())),
    };
    let asset_idx: Vec<usize> = match &schema.assets {
        Some(names) => names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
            })
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != date_idx).collect(),
    };
    if asset_idx.is_empty() {
        return Err(Error::Schema("no level columns".into()));
    }
    let names: Vec<String> = asset_idx.iter().map(|&i| headers[i].clone()).collect();

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| Error::Parse {
            row,
            message: format!("bad date '{raw_date}': {e}"),
        })?;
        let mut levels = Vec::with_capacity(asset_idx.len());
        for (&ci, name) in asset_idx.iter().zip(&names) {
            let cell = record.get(ci).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Data(format!("missing level for {name} on {date} (row {row})")));
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("bad level '{cell}' for {name}"),
            })?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-positive level {v} for {name} on {date} (row {row})"
                )));
            }
            levels.push(v);
        }
        rows.push((date, levels));
    }
    rows.sort_by_key(|(d, _)| *d);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateDate(pair[0].0));
        }
    }
    let dates = rows.iter().map(|(d, _)| *d).collect();
    let levels = Matrix::from_rows(&rows.into_iter().map(|(_, l)| l).collect::<Vec<_>>())?;
    PriceSeries::new(dates, levels, names)
}

/// Simple returns `(P[t+1] - P[t]) / P[t]`, dated at `t+1`.
pub fn compute_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    let t = prices.len();
    if t < 2 {
        return Err(Error::InsufficientData { needed: 2, got: t });
    }
    let n = prices.asset_names().len();
    let lv = prices.levels();
    let mut out = Matrix::zeros(t - 1, n);
    for r in 0..t - 1 {
        let (prev, next) = (lv.row(r), lv.row(r + 1));
        for c in 0..n {
            out.set(r, c, (next[c] - prev[c]) / prev[c]);
        }
    }
    ReturnSeries::new(
        prices.dates()[1..].to_vec(),
        out,
        prices.asset_names().to_vec(),
        Frequency::Daily,
    )
}

/// Business period used for aggregation and backtest calendars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Weekly,
    Monthly,
}

impl Period {
    /// A key shared by every date in the same period. Weekly periods end on
    /// Friday; weekend dates roll into the following week.
    pub fn key(self, date: NaiveDate) -> NaiveDate {
        match self {
            Period::Weekly => {
                let from_mon = date.weekday().num_days_from_monday();
                let fri = Weekday::Fri.num_days_from_monday();
                let ahead = (fri + 7 - from_mon) % 7;
                date + Days::new(u64::from(ahead))
            }
            Period::Monthly => NaiveDate::from_ymd_opt(date.year(), date.month(), 1).expect("first of month is valid"),
        }
    }

    /// Number of whole periods from key `a` to key `b`.
    fn distance(self, a: NaiveDate, b: NaiveDate) -> i64 {
        match self {
            Period::Weekly => (b - a).num_days() / 7,
            Period::Monthly => {
                (i64::from(b.year()) * 12 + i64::from(b.month())) - (i64::from(a.year()) * 12 + i64::from(a.month()))
            }
        }
    }

    pub fn frequency(self) -> Frequency {
        match self {
            Period::Weekly => Frequency::Weekly,
            Period::Monthly => Frequency::Monthly,
        }
    }
}

/// Contiguous index ranges of `dates` that fall into the same period.
pub fn period_spans(dates: &[NaiveDate], period: Period) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=dates.len() {
        if i == dates.len() || period.key(dates[i]) != period.key(dates[start]) {
            if i > start {
                spans.push(start..i);
            }
            start = i;
        }
    }
    spans
}

/// Result of compounding daily returns into periods.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub series: ReturnSeries,
    /// Calendar periods between the first and last observation without a
    /// single business day in the data.
    pub empty_periods: usize,
}

/// Compound daily returns within each period: `prod(1 + r) - 1`, stamped
/// with the last business day present in the period.
pub fn aggregate(daily: &ReturnSeries, period: Period) -> Result<Aggregated> {
    if daily.frequency() != Frequency::Daily {
        return Err(Error::Data("aggregation expects daily returns".into()));
    }
    let spans = period_spans(daily.dates(), period);
    let n = daily.n_assets();
    let mut out = Matrix::zeros(spans.len(), n);
    let mut dates = Vec::with_capacity(spans.len());
    let mut empty_periods = 0usize;
    for (w, span) in spans.iter().enumerate() {
        let compounded = compound(daily.returns(), span.clone());
        out.row_mut(w).copy_from_slice(&compounded);
        dates.push(daily.dates()[span.end - 1]);
        if w > 0 {
            let prev = period.key(daily.dates()[spans[w - 1].start]);
            let cur = period.key(daily.dates()[span.start]);
            empty_periods += (period.distance(prev, cur) - 1).max(0) as usize;
        }
    }
    if empty_periods > 0 {
        log::warn!("{empty_periods} empty period(s) skipped during aggregation");
    }
    let series = ReturnSeries::new(dates, out, daily.asset_names().to_vec(), period.frequency())?;
    Ok(Aggregated { series, empty_periods })
}

pub fn aggregate_weekly(daily: &ReturnSeries) -> Result<Aggregated> {
    aggregate(daily, Period::Weekly)
}

/// Per-column `prod(1 + r) - 1` over the given rows.
pub fn compound(returns: &Matrix, rows: Range<usize>) -> Vec<f64> {
    let mut acc = vec![1.0; returns.cols()];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(returns.row(r)) {
            *a *= 1.0 + x;
        }
    }
    acc.iter_mut().for_each(|a| *a -= 1.0);
    acc
}

/// Linear-interpolation quantile of already sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sort a copy and take the type-7 quantile.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetStats {
    pub asset: String,
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub min: f64,
    pub max: f64,
    /// `(probability level, quantile)` at [`QUANTILE_LEVELS`].
    pub quantiles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub frequency: Frequency,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub assets: Vec<AssetStats>,
}

/// Sample moments (unbiased variance, adjusted Fisher-Pearson skewness) and
/// type-7 quantiles per asset.
pub fn descriptive_stats(series: &ReturnSeries) -> Result<StatsSummary> {
    let m = series.len();
    if m < 3 {
        return Err(Error::InsufficientData { needed: 3, got: m });
    }
    let assets = series
        .asset_names()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mut col = series.returns().column(c);
            let nf = m as f64;
            let mean = col.iter().sum::<f64>() / nf;
            let (m2, m3) = col.iter().fold((0.0, 0.0), |(s2, s3), x| {
                let d = x - mean;
                (s2 + d * d, s3 + d * d * d)
            });
            let std_dev = (m2 / (nf - 1.0)).sqrt();
            let (b2, b3) = (m2 / nf, m3 / nf);
            let skewness = if b2 > 0.0 {
                let g1 = b3 / b2.powf(1.5);
                g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
            } else {
                0.0
            };
            col.sort_by(f64::total_cmp);
            AssetStats {
                asset: name.clone(),
                count: m,
                mean,
                std_dev,
                skewness,
                min: col[0],
                max: col[m - 1],
                quantiles: QUANTILE_LEVELS.iter().map(|&p| (p, quantile_sorted(&col, p))).collect(),
            }
        })
        .collect();
    Ok(StatsSummary {
        frequency: series.frequency(),
        start: series.dates()[0],
        end: series.dates()[m - 1],
        assets,
    })
}
