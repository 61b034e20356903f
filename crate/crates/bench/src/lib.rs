//! Shared fixtures for the benchmarks.

use regime_var::rng::rng_from_seed;
use regime_var::synthetic::{equity_bond_regimes, generate_returns};
use regime_var::Matrix;

/// `days` rows of two-asset regime-switching returns.
pub fn regime_window(days: usize, seed: u64) -> Matrix {
    generate_returns(&equity_bond_regimes(), days, &mut rng_from_seed(seed)).0
}
