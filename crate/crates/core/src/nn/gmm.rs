//! Unconditioned Gaussian-mixture head: per-regime means and Cholesky
//! factors with the diagonal kept in log space.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::store::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::gaussian::MvGaussian;
use crate::matrix::Matrix;

#[inline]
fn packed(a: usize, b: usize) -> usize {
    a * (a + 1) / 2 + b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmHead {
    /// `k x n`.
    pub mu: ParamId,
    /// `k x n(n+1)/2`, lower triangle packed row by row, diagonal as log.
    pub chol: ParamId,
    pub k: usize,
    pub n: usize,
}

impl GmmHead {
    pub fn new(store: &mut ParamStore, name: &str, k: usize, n: usize) -> Self {
        Self {
            mu: store.add(format!("{name}.mu"), &[k, n]),
            chol: store.add(format!("{name}.chol"), &[k, n * (n + 1) / 2]),
            k,
            n,
        }
    }

    fn tri(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// Means from a standard normal, identity factors.
    pub fn init_random<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for v in store.value_mut(self.mu) {
            *v = StandardNormal.sample(rng);
        }
        store.value_mut(self.chol).fill(0.0);
    }

    pub fn set_components(&self, store: &mut ParamStore, comps: &[MvGaussian]) -> Result<()> {
        if comps.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: comps.len(),
            });
        }
        let (n, tri) = (self.n, self.tri());
        for (i, g) in comps.iter().enumerate() {
            if g.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: g.dim(),
                });
            }
            store.value_mut(self.mu)[i * n..(i + 1) * n].copy_from_slice(g.mean());
            let l = g.factor();
            let dst = &mut store.value_mut(self.chol)[i * tri..(i + 1) * tri];
            for a in 0..n {
                for b in 0..a {
                    dst[packed(a, b)] = l[a * n + b];
                }
                dst[packed(a, a)] = l[a * n + a].ln();
            }
        }
        Ok(())
    }

    /// Full factor of component `i`.
    pub fn factor(&self, store: &ParamStore, i: usize) -> Vec<f64> {
        let (n, tri) = (self.n, self.tri());
        let src = &store.value(self.chol)[i * tri..(i + 1) * tri];
        let mut l = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..a {
                l[a * n + b] = src[packed(a, b)];
            }
            l[a * n + a] = src[packed(a, a)].exp();
        }
        l
    }

    pub fn components(&self, store: &ParamStore) -> Vec<MvGaussian> {
        let n = self.n;
        (0..self.k)
            .map(|i| {
                let mean = store.value(self.mu)[i * n..(i + 1) * n].to_vec();
                MvGaussian::from_factor_unchecked(mean, self.factor(store, i))
            })
            .collect()
    }

    /// `T x k` matrix of component log-densities.
    pub fn log_densities(&self, store: &ParamStore, obs: &Matrix) -> Matrix {
        let comps = self.components(store);
        let mut out = Matrix::zeros(obs.rows(), self.k);
        for t in 0..obs.rows() {
            let x = obs.row(t);
            for (i, g) in comps.iter().enumerate() {
                out.set(t, i, g.log_density_unchecked(x));
            }
        }
        out
    }

    /// Accumulates gradients given `d_logn[t][i] = dL / d log N(x_t; i)`.
    pub fn backward(&self, store: &mut ParamStore, obs: &Matrix, d_logn: &Matrix) {
        let (n, tri) = (self.n, self.tri());
        let mut g_mu = vec![0.0; self.k * n];
        let mut g_chol = vec![0.0; self.k * tri];
        let mut z = vec![0.0; n];
        let mut u = vec![0.0; n];
        for i in 0..self.k {
            let l = self.factor(store, i);
            let mu = &store.value(self.mu)[i * n..(i + 1) * n];
            for t in 0..obs.rows() {
                let w = d_logn.get(t, i);
                if w == 0.0 {
                    continue;
                }
                let x = obs.row(t);
                // z = L⁻¹(x - μ)
                for a in 0..n {
                    let mut s = x[a] - mu[a];
                    for b in 0..a {
                        s -= l[a * n + b] * z[b];
                    }
                    z[a] = s / l[a * n + a];
                }
                // u = L⁻ᵀ z
                for a in (0..n).rev() {
                    let mut s = z[a];
                    for b in a + 1..n {
                        s -= l[b * n + a] * u[b];
                    }
                    u[a] = s / l[a * n + a];
                }
                for a in 0..n {
                    g_mu[i * n + a] += w * u[a];
                    for b in 0..a {
                        g_chol[i * tri + packed(a, b)] += w * u[a] * z[b];
                    }
                    let laa = l[a * n + a];
                    g_chol[i * tri + packed(a, a)] += w * (laa * u[a] * z[a] - 1.0);
                }
            }
        }
        for (d, g) in store.grad_mut(self.mu).iter_mut().zip(g_mu) {
            *d += g;
        }
        for (d, g) in store.grad_mut(self.chol).iter_mut().zip(g_chol) {
            *d += g;
        }
    }
}

/// `-n/2 ln 2π - Σ log L_aa - |z|²/2`, used by tests as a direct oracle.
#[cfg(test)]
pub(crate) fn direct_log_density(mu: &[f64], l: &[f64], x: &[f64]) -> f64 {
    let n = mu.len();
    let mut z = vec![0.0; n];
    let mut quad = 0.0;
    let mut logdet = 0.0;
    for a in 0..n {
        let mut s = x[a] - mu[a];
        for b in 0..a {
            s -= l[a * n + b] * z[b];
        }
        z[a] = s / l[a * n + a];
        quad += z[a] * z[a];
        logdet += l[a * n + a].ln();
    }
    -0.5 * n as f64 * crate::gaussian::LN_2PI - logdet - 0.5 * quad
}
