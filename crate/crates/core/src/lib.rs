//! Regime-switching Monte-Carlo Value-at-Risk.
//!
//! Classic Gaussian, hidden Markov and neural regime-switching models are
//! fitted on a rolling window of daily returns, simulated forward, and
//! turned into VaR thresholds that are backtested and compared.

pub mod backtest;
pub mod error;
pub mod evaluate;
pub mod gaussian;
pub mod hmm;
pub mod market;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod persist;
pub mod regime_net;
pub mod rng;
pub mod scenario;
pub mod synthetic;

pub use backtest::{
    breach_costs, detect_breaches, run_backtest, var_threshold, Accounting, BacktestConfig, BacktestResult, BreachRecord,
    CostSummary, FailureRecord, VarEstimate,
};
pub use error::{Error, ErrorKind, Result};
pub use evaluate::{
    comp_totals, comp_value, comparison_report, dominance, paired_t_test, BreachSet, CompTotal, ComparisonCell, ComparisonReport,
    Sided,
};
pub use gaussian::{fit_gaussian, GaussianMixture, MvGaussian};
pub use hmm::{baum_welch, forward_backward, simulate_hmm, EmConfig, HmmParams, SmoothedPath};
pub use market::{
    aggregate, aggregate_weekly, compute_returns, descriptive_stats, load_price_series, Frequency, Period, PriceSchema,
    PriceSeries, ReturnSeries, StatsSummary,
};
pub use matrix::Matrix;
pub use model::{fit_model, FitSettings, FittedModel, ModelKind, ModelSpec};
pub use persist::ModelBundle;
pub use regime_net::{train, BackboneSpec, InitMode, NeuralSampler, RegimeNetModel, TrainConfig};
pub use rng::{derive_seed, rng_from_seed, Rng};
pub use scenario::{simulate_horizon_returns, PathSampler};
