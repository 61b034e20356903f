//! Synthetic return and price generators for tests, demos and benchmarks.

use chrono::{Datelike, Days, NaiveDate, Weekday};

use crate::error::Result;
use crate::gaussian::MvGaussian;
use crate::hmm::{simulate_hmm_with_regimes, HmmParams};
use crate::market::{Frequency, PriceSeries, ReturnSeries};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// `count` weekdays starting at `start` (skipped forward if a weekend).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Two daily regimes for an equity/bond pair: a calm bull state and a
/// volatile bear state with falling equities and rallying bonds. Mixing
/// them gives negatively skewed, fat-tailed equity returns.
pub fn equity_bond_regimes() -> HmmParams {
    let cov = |s0: f64, s1: f64, rho: f64| [s0 * s0, rho * s0 * s1, rho * s0 * s1, s1 * s1];
    let bull = MvGaussian::from_covariance(vec![0.0007, 0.0001], &cov(0.007, 0.003, 0.1)).expect("valid");
    let bear = MvGaussian::from_covariance(vec![-0.0015, 0.0004], &cov(0.022, 0.005, -0.3)).expect("valid");
    HmmParams::new(vec![0.8, 0.2], vec![0.99, 0.01, 0.04, 0.96], vec![bull, bear]).expect("valid")
}

/// Single-asset version of [`equity_bond_regimes`] (equity only).
pub fn equity_regimes() -> HmmParams {
    let bull = MvGaussian::new(vec![0.0007], vec![0.007]).expect("valid");
    let bear = MvGaussian::new(vec![-0.0015], vec![0.022]).expect("valid");
    HmmParams::new(vec![0.8, 0.2], vec![0.99, 0.01, 0.04, 0.96], vec![bull, bear]).expect("valid")
}

/// `days x n` returns drawn from `params`, first regime from `pi0`, with
/// the regime path.
pub fn generate_returns(params: &HmmParams, days: usize, rng: &mut Rng) -> (Matrix, Vec<usize>) {
    let (mut m, s) = simulate_hmm_with_regimes(params, params.pi0(), days, rng);
    // keep simple returns above -100%
    for v in m.as_mut_slice() {
        *v = v.max(-0.95);
    }
    (m, s)
}

/// Daily return series on a business-day calendar starting at `start`.
pub fn return_series(returns: Matrix, start: NaiveDate, names: Vec<String>) -> Result<ReturnSeries> {
    let dates = business_days(start, returns.rows());
    ReturnSeries::new(dates, returns, names, Frequency::Daily)
}

/// Price levels compounding `returns` from 100. One row longer than
/// `returns`; the first business day carries the base level.
pub fn price_series(returns: &Matrix, start: NaiveDate, names: Vec<String>) -> Result<PriceSeries> {
    let (t, n) = (returns.rows(), returns.cols());
    let mut levels = Matrix::zeros(t + 1, n);
    levels.row_mut(0).fill(100.0);
    for r in 0..t {
        for j in 0..n {
            let prev = levels.get(r, j);
            levels.set(r + 1, j, prev * (1.0 + returns.get(r, j)));
        }
    }
    PriceSeries::new(business_days(start, t + 1), levels, names)
}

/// Default asset labels `asset0`, `asset1`, ...
pub fn asset_names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("asset{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{compute_returns, descriptive_stats};
    use crate::rng::rng_from_seed;

    #[test]
    fn prices_roundtrip_to_returns() {
        let mut rng = rng_from_seed(1);
        let (r, _) = generate_returns(&equity_bond_regimes(), 300, &mut rng);
        let start = NaiveDate::from_ymd_opt(2010, 1, 4).unwrap();
        let prices = price_series(&r, start, asset_names(2)).unwrap();
        let back = compute_returns(&prices).unwrap();
        for (a, b) in back.returns().as_slice().iter().zip(r.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        assert!(prices.dates().iter().all(|d| d.weekday().num_days_from_monday() < 5));
    }

    #[test]
    fn regime_mix_is_negatively_skewed() {
        let mut rng = rng_from_seed(2);
        let (r, s) = generate_returns(&equity_bond_regimes(), 20_000, &mut rng);
        let series = return_series(r, NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(), asset_names(2)).unwrap();
        let stats = descriptive_stats(&series).unwrap();
        assert!(stats.assets[0].skewness < -0.1, "{}", stats.assets[0].skewness);
        let bear = s.iter().filter(|x| **x == 1).count() as f64 / s.len() as f64;
        assert!((bear - 0.2).abs() < 0.06, "{bear}");
    }
}
