//! Multivariate Gaussians carried as lower-triangular Cholesky factors, and
//! finite mixtures of them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::categorical;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cholesky factor of a symmetric `n x n` row-major matrix. Fails unless
/// every pivot is strictly positive.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NotPositiveDefinite);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// `N(mean, L Lᵀ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr", into = "GaussianRepr")]
pub struct MvGaussian {
    mean: Vec<f64>,
    /// Full `n x n` row-major storage; entries above the diagonal are zero.
    factor: Vec<f64>,
}

/// Wire form: mean plus the lower triangle packed row by row.
#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    factor: Vec<f64>,
}

impl TryFrom<GaussianRepr> for MvGaussian {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        let n = r.mean.len();
        if r.factor.len() != n * (n + 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: n * (n + 1) / 2,
                got: r.factor.len(),
            });
        }
        let mut full = vec![0.0; n * n];
        let mut it = r.factor.into_iter();
        for i in 0..n {
            for j in 0..=i {
                full[i * n + j] = it.next().expect("length checked");
            }
        }
        MvGaussian::new(r.mean, full)
    }
}

impl From<MvGaussian> for GaussianRepr {
    fn from(g: MvGaussian) -> Self {
        let n = g.dim();
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            packed.extend_from_slice(&g.factor[i * n..i * n + i + 1]);
        }
        GaussianRepr {
            mean: g.mean,
            factor: packed,
        }
    }
}

impl MvGaussian {
    /// Build from a mean and a full row-major lower-triangular factor.
    pub fn new(mean: Vec<f64>, factor: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        if factor.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: factor.len(),
            });
        }
        for i in 0..n {
            if !(factor[i * n + i] > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            if factor[i * n + i + 1..(i + 1) * n].iter().any(|&v| v != 0.0) {
                return Err(Error::Data("factor is not lower triangular".into()));
            }
        }
        if mean.iter().chain(&factor).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: 0,
                context: "gaussian parameters".into(),
            });
        }
        Ok(Self { mean, factor })
    }

    /// Skips the positive-diagonal check; only meant for degenerate test
    /// fixtures such as a zero factor.
    #[doc(hidden)]
    pub fn from_factor_unchecked(mean: Vec<f64>, factor: Vec<f64>) -> Self {
        assert_eq!(factor.len(), mean.len() * mean.len());
        Self { mean, factor }
    }

    pub fn from_covariance(mean: Vec<f64>, cov: &[f64]) -> Result<Self> {
        let n = mean.len();
        if cov.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: cov.len(),
            });
        }
        let l = cholesky(cov, n)?;
        Self::new(mean, l)
    }

    pub fn standard(n: usize) -> Self {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            l[i * n + i] = 1.0;
        }
        Self {
            mean: vec![0.0; n],
            factor: l,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    /// `Σ = L Lᵀ`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.dim();
        let l = &self.factor;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                s[i * n + j] = v;
                s[j * n + i] = v;
            }
        }
        s
    }

    /// Per-coordinate standard deviations.
    pub fn std_devs(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| self.factor[i * n..i * n + i + 1].iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// `z = L⁻¹ (x - μ)` by forward substitution.
    pub fn whiten_into(&self, x: &[f64], z: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= self.factor[i * n + k] * z[k];
            }
            z[i] = s / self.factor[i * n + i];
        }
    }

    /// `Σ log L_ii`, i.e. half the log-determinant of Σ.
    pub fn half_log_det(&self) -> f64 {
        let n = self.dim();
        (0..n).map(|i| self.factor[i * n + i].ln()).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.log_density_unchecked(x))
    }

    /// Log-density without the dimension check.
    pub fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut quad = 0.0;
        let mut z = [0.0f64; 8];
        if n <= z.len() {
            self.whiten_into(x, &mut z[..n]);
            quad = z[..n].iter().map(|v| v * v).sum();
        } else {
            let mut zv = vec![0.0; n];
            self.whiten_into(x, &mut zv);
            quad += zv.iter().map(|v| v * v).sum::<f64>();
        }
        -0.5 * n as f64 * LN_2PI - self.half_log_det() - 0.5 * quad
    }

    /// Writes `μ + L z` with fresh standard normals `z` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = self.dim();
        let mut z = [0.0f64; 8];
        let mut zv;
        let z: &mut [f64] = if n <= z.len() {
            &mut z[..n]
        } else {
            zv = vec![0.0; n];
            &mut zv
        };
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for i in 0..n {
            let row = &self.factor[i * n..i * n + i + 1];
            out[i] = self.mean[i] + row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

/// Sample mean and unbiased sample covariance of the rows of `samples`.
pub fn sample_moments(samples: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (samples.rows(), samples.cols());
    let mut mean = vec![0.0; n];
    for row in samples.iter_rows() {
        for (a, x) in mean.iter_mut().zip(row) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    let mut cov = vec![0.0; n * n];
    for row in samples.iter_rows() {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[i * n + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (m as f64 - 1.0).max(1.0);
    for i in 0..n {
        for j in 0..=i {
            let v = cov[i * n + j] / denom;
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    (mean, cov)
}

/// The mean/variance model: sample mean and unbiased sample covariance.
///
/// A non-positive-definite covariance gets a single diagonal jitter of
/// `1e-10 * trace / n` before the factorization is retried.
pub fn fit_gaussian(samples: &Matrix) -> Result<MvGaussian> {
    let (m, n) = (samples.rows(), samples.cols());
    if m <= n {
        return Err(Error::InsufficientData { needed: n + 1, got: m });
    }
    let (mean, mut cov) = sample_moments(samples);
    match cholesky(&cov, n) {
        Ok(l) => MvGaussian::new(mean, l),
        Err(_) => {
            let trace: f64 = (0..n).map(|i| cov[i * n + i]).sum();
            let jitter = 1e-10 * trace / n as f64;
            for i in 0..n {
                cov[i * n + i] += jitter;
            }
            let l = cholesky(&cov, n)?;
            MvGaussian::new(mean, l)
        }
    }
}

/// Weighted sum of Gaussian components; weights are kept normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<MvGaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<MvGaussian>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        let n = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.dim(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Data("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Data("mixture weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[MvGaussian] {
        &self.components
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| Ok(w.ln() + c.log_density(x)?))
            .collect::<Result<_>>()?;
        Ok(log_sum_exp(&terms))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let i = categorical(rng, &self.weights);
        self.components[i].sample(rng)
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
