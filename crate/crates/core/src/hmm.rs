//! Gaussian hidden Markov model: scaled forward-backward smoothing,
//! Baum-Welch estimation and Monte-Carlo path simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky, fit_gaussian, sample_moments, MvGaussian};
use crate::matrix::Matrix;
use crate::rng::{categorical, Rng};

/// Row sums of stochastic vectors must be within this of one.
const STOCHASTIC_TOL: f64 = 1e-9;
const COV_JITTER: f64 = 1e-10;

/// `(π0, A, μ, Σ)` of a k-regime Gaussian HMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmRepr", into = "HmmRepr")]
pub struct HmmParams {
    pi0: Vec<f64>,
    /// Row-major `k x k`, rows sum to one.
    trans: Vec<f64>,
    regimes: Vec<MvGaussian>,
}

#[derive(Serialize, Deserialize)]
struct HmmRepr {
    pi0: Vec<f64>,
    trans: Vec<f64>,
    regimes: Vec<MvGaussian>,
}

impl TryFrom<HmmRepr> for HmmParams {
    type Error = Error;
    fn try_from(r: HmmRepr) -> Result<Self> {
        HmmParams::new(r.pi0, r.trans, r.regimes)
    }
}

impl From<HmmParams> for HmmRepr {
    fn from(p: HmmParams) -> Self {
        HmmRepr {
            pi0: p.pi0,
            trans: p.trans,
            regimes: p.regimes,
        }
    }
}

fn check_stochastic(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Data(format!("{what} has entries outside [0, 1]")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Data(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl HmmParams {
    pub fn new(pi0: Vec<f64>, trans: Vec<f64>, regimes: Vec<MvGaussian>) -> Result<Self> {
        let k = regimes.len();
        if k == 0 {
            return Err(Error::Config("an HMM needs at least one regime".into()));
        }
        if pi0.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: pi0.len(),
            });
        }
        if trans.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: trans.len(),
            });
        }
        let n = regimes[0].dim();
        if let Some(g) = regimes.iter().find(|g| g.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.dim(),
            });
        }
        check_stochastic(&pi0, "initial distribution")?;
        for row in trans.chunks(k) {
            check_stochastic(row, "transition row")?;
        }
        Ok(Self { pi0, trans, regimes })
    }

    /// The one-regime model, equivalent to a single Gaussian.
    pub fn single(g: MvGaussian) -> Self {
        Self {
            pi0: vec![1.0],
            trans: vec![1.0],
            regimes: vec![g],
        }
    }

    pub fn k(&self) -> usize {
        self.regimes.len()
    }

    pub fn dim(&self) -> usize {
        self.regimes[0].dim()
    }

    pub fn pi0(&self) -> &[f64] {
        &self.pi0
    }

    pub fn trans(&self) -> &[f64] {
        &self.trans
    }

    pub fn trans_row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.trans[i * k..(i + 1) * k]
    }

    pub fn regimes(&self) -> &[MvGaussian] {
        &self.regimes
    }

    /// Relabel regimes so that new regime `j` is old regime `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> HmmParams {
        let k = self.k();
        let mut trans = vec![0.0; k * k];
        for (a, &pa) in perm.iter().enumerate() {
            for (b, &pb) in perm.iter().enumerate() {
                trans[a * k + b] = self.trans[pa * k + pb];
            }
        }
        HmmParams {
            pi0: perm.iter().map(|&p| self.pi0[p]).collect(),
            trans,
            regimes: perm.iter().map(|&p| self.regimes[p].clone()).collect(),
        }
    }

    /// Regimes ordered by the mean of the first (equity) coordinate,
    /// highest first, so regime 0 reads as the bull market.
    pub fn sorted_bull_first(&self) -> HmmParams {
        let mut perm: Vec<usize> = (0..self.k()).collect();
        perm.sort_by(|&a, &b| {
            self.regimes[b].mean()[0]
                .total_cmp(&self.regimes[a].mean()[0])
                .then(a.cmp(&b))
        });
        self.permuted(&perm)
    }
}

/// Smoothed regime probabilities `P(S_t = i | X_1..T)` and the window's
/// log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPath {
    pub probs: Matrix,
    pub log_likelihood: f64,
}

impl SmoothedPath {
    pub fn last(&self) -> &[f64] {
        self.probs.row(self.probs.rows() - 1)
    }
}

struct EStep {
    gamma: Matrix,
    /// `Σ_t ξ_t(i, j)`, row-major.
    xi_sum: Vec<f64>,
    log_likelihood: f64,
}

fn e_step(params: &HmmParams, obs: &Matrix, want_xi: bool) -> Result<EStep> {
    let (t_len, k) = (obs.rows(), params.k());
    if t_len == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if obs.cols() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: obs.cols(),
        });
    }

    // emissions, shifted per step so the largest is exactly one
    let mut b = Matrix::zeros(t_len, k);
    let mut shift = vec![0.0; t_len];
    for t in 0..t_len {
        let x = obs.row(t);
        let row = b.row_mut(t);
        for (i, g) in params.regimes.iter().enumerate() {
            row[i] = g.log_density_unchecked(x);
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::NonFinite {
                index: t,
                context: "emission log-density".into(),
            });
        }
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        shift[t] = m;
    }

    let a = &params.trans;
    let mut alpha = Matrix::zeros(t_len, k);
    let mut scale = vec![0.0; t_len];
    let mut log_likelihood = 0.0;
    for t in 0..t_len {
        let mut c = 0.0;
        for j in 0..k {
            let prior = if t == 0 {
                params.pi0[j]
            } else {
                let prev = alpha.row(t - 1);
                (0..k).map(|i| prev[i] * a[i * k + j]).sum()
            };
            let v = prior * b.get(t, j);
            alpha.set(t, j, v);
            c += v;
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonFinite {
                index: t,
                context: "forward recursion has zero likelihood".into(),
            });
        }
        alpha.row_mut(t).iter_mut().for_each(|v| *v /= c);
        scale[t] = c;
        log_likelihood += c.ln() + shift[t];
    }

    let mut beta = Matrix::zeros(t_len, k);
    beta.row_mut(t_len - 1).fill(1.0);
    for t in (0..t_len - 1).rev() {
        for i in 0..k {
            let s: f64 = (0..k).map(|j| a[i * k + j] * b.get(t + 1, j) * beta.get(t + 1, j)).sum();
            beta.set(t, i, s / scale[t + 1]);
        }
    }

    let mut gamma = Matrix::zeros(t_len, k);
    for t in 0..t_len {
        let row = gamma.row_mut(t);
        let mut s = 0.0;
        for i in 0..k {
            row[i] = alpha.get(t, i) * beta.get(t, i);
            s += row[i];
        }
        row.iter_mut().for_each(|v| *v /= s);
    }

    let mut xi_sum = vec![0.0; k * k];
    if want_xi {
        let mut local = vec![0.0; k * k];
        for t in 0..t_len - 1 {
            let mut total = 0.0;
            for i in 0..k {
                for j in 0..k {
                    let v = alpha.get(t, i) * a[i * k + j] * b.get(t + 1, j) * beta.get(t + 1, j);
                    local[i * k + j] = v;
                    total += v;
                }
            }
            for (acc, v) in xi_sum.iter_mut().zip(&local) {
                *acc += v / total;
            }
        }
    }

    Ok(EStep {
        gamma,
        xi_sum,
        log_likelihood,
    })
}

/// Exact smoothed posteriors via scaled forward-backward recursions.
pub fn forward_backward(params: &HmmParams, obs: &Matrix) -> Result<SmoothedPath> {
    let e = e_step(params, obs, false)?;
    Ok(SmoothedPath {
        probs: e.gamma,
        log_likelihood: e.log_likelihood,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Stop once the log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

/// Baum-Welch output with the per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: HmmParams,
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

fn initial_params<R: rand::Rng + ?Sized>(obs: &Matrix, k: usize, rng: &mut R) -> Result<HmmParams> {
    let n = obs.cols();
    let (mean, cov) = sample_moments(obs);
    let base = MvGaussian::from_covariance(mean.clone(), &cov).or_else(|_| fit_gaussian(obs))?;
    let sd = base.std_devs();
    let regimes = (0..k)
        .map(|_| {
            let mu: Vec<f64> = (0..n).map(|c| mean[c] + rng.random_range(-0.5..=0.5) * sd[c]).collect();
            MvGaussian::new(mu, base.factor().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let off = if k > 1 { 0.1 / (k - 1) as f64 } else { 0.0 };
    let mut trans = vec![off; k * k];
    for i in 0..k {
        trans[i * k + i] = if k > 1 { 0.9 } else { 1.0 };
    }
    HmmParams::new(vec![1.0 / k as f64; k], trans, regimes)
}

fn m_step(obs: &Matrix, e: &EStep, k: usize) -> Result<HmmParams> {
    let (t_len, n) = (obs.rows(), obs.cols());
    let mut regimes = Vec::with_capacity(k);
    for i in 0..k {
        let mass: f64 = (0..t_len).map(|t| e.gamma.get(t, i)).sum();
        if !(mass >= (n + 1) as f64) {
            return Err(Error::RegimeCollapse {
                regime: i,
                mass,
                required: n + 1,
            });
        }
        let mut mu = vec![0.0; n];
        for t in 0..t_len {
            let w = e.gamma.get(t, i);
            for (m, x) in mu.iter_mut().zip(obs.row(t)) {
                *m += w * x;
            }
        }
        mu.iter_mut().for_each(|m| *m /= mass);
        let mut cov = vec![0.0; n * n];
        for t in 0..t_len {
            let w = e.gamma.get(t, i);
            let x = obs.row(t);
            for r in 0..n {
                let dr = x[r] - mu[r];
                for c in 0..=r {
                    cov[r * n + c] += w * dr * (x[c] - mu[c]);
                }
            }
        }
        for r in 0..n {
            for c in 0..=r {
                let v = cov[r * n + c] / mass;
                cov[r * n + c] = v;
                cov[c * n + r] = v;
            }
            cov[r * n + r] += COV_JITTER;
        }
        let l = cholesky(&cov, n)?;
        regimes.push(MvGaussian::new(mu, l)?);
    }

    let mut trans = e.xi_sum.clone();
    for row in trans.chunks_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let mut pi0 = e.gamma.row(0).to_vec();
    let s: f64 = pi0.iter().sum();
    pi0.iter_mut().for_each(|v| *v /= s);
    HmmParams::new(pi0, trans, regimes)
}

/// Expectation-maximization for a k-regime Gaussian HMM. With `k = 1` the
/// result is exactly [`fit_gaussian`]. Regimes come back bull first.
pub fn baum_welch_trace(obs: &Matrix, k: usize, config: &EmConfig, rng: &mut Rng) -> Result<EmFit> {
    let (t_len, n) = (obs.rows(), obs.cols());
    if k == 0 {
        return Err(Error::Config("regime count must be at least 1".into()));
    }
    if t_len <= k * (n + 1) {
        return Err(Error::InsufficientData {
            needed: k * (n + 1) + 1,
            got: t_len,
        });
    }
    if k == 1 {
        let params = HmmParams::single(fit_gaussian(obs)?);
        let ll = forward_backward(&params, obs)?.log_likelihood;
        return Ok(EmFit {
            params,
            log_likelihoods: vec![ll],
            converged: true,
        });
    }

    let mut params = initial_params(obs, k, rng)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for it in 0..=config.max_iter {
        let e = e_step(&params, obs, true)?;
        if let Some(&prev) = trace.last() {
            if e.log_likelihood - prev < config.tol {
                trace.push(e.log_likelihood);
                converged = true;
                break;
            }
        }
        trace.push(e.log_likelihood);
        if it == config.max_iter {
            break;
        }
        params = m_step(obs, &e, k)?;
    }
    Ok(EmFit {
        params: params.sorted_bull_first(),
        log_likelihoods: trace,
        converged,
    })
}

pub fn baum_welch(obs: &Matrix, k: usize, config: &EmConfig, rng: &mut Rng) -> Result<HmmParams> {
    baum_welch_trace(obs, k, config, rng).map(|f| f.params)
}

/// One simulated path: the first regime is drawn from `last_smoothed`, each
/// following day moves along the transition matrix and draws its return
/// from the new regime's Gaussian. Returns the `horizon x n` path and the
/// regime of every simulated day.
pub fn simulate_hmm_with_regimes(
    params: &HmmParams,
    last_smoothed: &[f64],
    horizon: usize,
    rng: &mut Rng,
) -> (Matrix, Vec<usize>) {
    let n = params.dim();
    let mut out = Matrix::zeros(horizon, n);
    let mut regimes = Vec::with_capacity(horizon);
    let mut s = categorical(rng, last_smoothed);
    for day in 0..horizon {
        s = categorical(rng, params.trans_row(s));
        params.regimes[s].sample_into(rng, out.row_mut(day));
        regimes.push(s);
    }
    (out, regimes)
}

pub fn simulate_hmm(params: &HmmParams, last_smoothed: &[f64], horizon: usize, rng: &mut Rng) -> Matrix {
    simulate_hmm_with_regimes(params, last_smoothed, horizon, rng).0
}
