//! Monte-Carlo path generation shared by every model, compounded to
//! horizon returns.

use rayon::prelude::*;

use crate::gaussian::MvGaussian;
use crate::hmm::{simulate_hmm, HmmParams};
use crate::matrix::Matrix;
use crate::rng::{stream_rng, Rng, PATH_CHUNK};

/// Something that can draw daily return paths.
pub trait PathSampler: Sync {
    fn n_assets(&self) -> usize;

    /// Writes `horizon` simulated daily returns into the rows of `out`.
    fn sample_path(&self, rng: &mut Rng, out: &mut Matrix);
}

/// I.i.d. draws from one Gaussian.
#[derive(Debug, Clone)]
pub struct ClassicSampler {
    pub gaussian: MvGaussian,
}

impl PathSampler for ClassicSampler {
    fn n_assets(&self) -> usize {
        self.gaussian.dim()
    }

    fn sample_path(&self, rng: &mut Rng, out: &mut Matrix) {
        for t in 0..out.rows() {
            self.gaussian.sample_into(rng, out.row_mut(t));
        }
    }
}

/// Regime chain started from the last smoothed distribution.
#[derive(Debug, Clone)]
pub struct HmmSampler {
    pub params: HmmParams,
    pub last_smoothed: Vec<f64>,
}

impl PathSampler for HmmSampler {
    fn n_assets(&self) -> usize {
        self.params.dim()
    }

    fn sample_path(&self, rng: &mut Rng, out: &mut Matrix) {
        *out = simulate_hmm(&self.params, &self.last_smoothed, out.rows(), rng);
    }
}

/// `paths x n` matrix of compounded horizon returns `Π(1 + r) - 1`.
///
/// Paths are generated in chunks of [`PATH_CHUNK`], each on its own
/// stream of `seed`, so the result does not depend on the thread count.
pub fn simulate_horizon_returns(sampler: &dyn PathSampler, horizon: usize, paths: usize, seed: u64) -> Matrix {
    let n = sampler.n_assets();
    let mut out = Matrix::zeros(paths, n);
    out.as_mut_slice()
        .par_chunks_mut(PATH_CHUNK * n.max(1))
        .enumerate()
        .for_each(|(chunk, block)| {
            let mut rng = stream_rng(seed, chunk as u64);
            let mut path = Matrix::zeros(horizon, n);
            for row in block.chunks_mut(n.max(1)) {
                sampler.sample_path(&mut rng, &mut path);
                row.fill(1.0);
                for day in path.iter_rows() {
                    for (acc, r) in row.iter_mut().zip(day) {
                        *acc *= 1.0 + r;
                    }
                }
                row.iter_mut().for_each(|v| *v -= 1.0);
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::quantile;

    #[test]
    fn classic_quantile_matches_normal() {
        let g = MvGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let sampler = ClassicSampler { gaussian: g };
        let out = simulate_horizon_returns(&sampler, 1, 100_000, 1);
        let q = quantile(&out.column(0), 0.05);
        assert!((q + 1.6449).abs() < 0.02, "{q}");
    }

    #[test]
    fn compounding_and_zero_horizon() {
        let g = MvGaussian::from_factor_unchecked(vec![0.01, -0.02], vec![0.0; 4]);
        let sampler = ClassicSampler { gaussian: g };
        let out = simulate_horizon_returns(&sampler, 5, 3, 0);
        for row in out.iter_rows() {
            assert!((row[0] - (1.01f64.powi(5) - 1.0)).abs() < 1e-15);
            assert!((row[1] - (0.98f64.powi(5) - 1.0)).abs() < 1e-15);
        }
        let empty = simulate_horizon_returns(&sampler, 0, 4, 0);
        assert!(empty.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn independent_of_thread_count() {
        let g = MvGaussian::from_covariance(vec![0.0, 0.001], &[1e-4, 1e-5, 1e-5, 2e-4]).unwrap();
        let sampler = ClassicSampler { gaussian: g };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_horizon_returns(&sampler, 5, 5000, 9));
        let b = four.install(|| simulate_horizon_returns(&sampler, 5, 5000, 9));
        assert_eq!(a, b);
    }
}
