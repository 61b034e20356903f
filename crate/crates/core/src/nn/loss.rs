//! Lookahead mixture negative log-likelihood, the balance regularizer and
//! their product.

use crate::error::{Error, Result};
use crate::gaussian::log_sum_exp;
use crate::matrix::Matrix;

/// Value and gradients of a sequence objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Same shape as the φ matrix.
    pub dphi: Matrix,
    /// Same shape as the log-density matrix.
    pub d_logn: Matrix,
}

/// `-Σ_t Σ_{j=1..J} log Σ_i φ_i(t) N(x_{t+j}; i)`.
///
/// Row `m` of `phi` belongs to time `origin + m`; `log_n[s][i]` is the
/// log-density of observation `s` under component `i`. Terms with
/// `t + j >= log_n.rows()` are dropped.
pub fn sequence_loss(phi: &Matrix, origin: usize, log_n: &Matrix, lookahead: usize) -> Result<LossGrad> {
    let (rows, k) = (phi.rows(), phi.cols());
    if log_n.cols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: log_n.cols(),
        });
    }
    if lookahead == 0 {
        return Err(Error::Config("lookahead must be at least 1".into()));
    }
    let t_len = log_n.rows();
    let mut loss = 0.0;
    let mut dphi = Matrix::zeros(rows, k);
    let mut d_logn = Matrix::zeros(t_len, k);
    let mut terms = vec![0.0; k];
    for m in 0..rows {
        let t = origin + m;
        let p = phi.row(m);
        let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        for s in t + 1..=(t + lookahead).min(t_len.saturating_sub(1)) {
            let ln = log_n.row(s);
            for i in 0..k {
                terms[i] = log_p[i] + ln[i];
            }
            let lse = log_sum_exp(&terms);
            if !lse.is_finite() {
                return Err(Error::NonFinite {
                    index: s,
                    context: "mixture density".into(),
                });
            }
            loss -= lse;
            for i in 0..k {
                let r = (terms[i] - lse).exp();
                if p[i] > 0.0 {
                    dphi.row_mut(m)[i] -= r / p[i];
                }
                d_logn.row_mut(s)[i] -= r;
            }
        }
    }
    Ok(LossGrad { loss, dphi, d_logn })
}

/// Σ_i (mean_t φ_i(t))².
pub fn balance_regularizer(phi: &Matrix) -> f64 {
    column_means(phi).iter().map(|m| m * m).sum()
}

fn column_means(phi: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; phi.cols()];
    for row in phi.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let rows = phi.rows().max(1) as f64;
    means.iter_mut().for_each(|m| *m /= rows);
    means
}

/// `d reg / d φ_i(t) = 2 φ̄_i / T`.
pub fn balance_regularizer_grad(phi: &Matrix) -> Matrix {
    let means = column_means(phi);
    let rows = phi.rows().max(1) as f64;
    let mut g = Matrix::zeros(phi.rows(), phi.cols());
    for t in 0..phi.rows() {
        for (d, m) in g.row_mut(t).iter_mut().zip(&means) {
            *d = 2.0 * m / rows;
        }
    }
    g
}

/// `(1 + w·reg)·L`.
pub fn regularized_loss(base: f64, reg: f64, weight: f64) -> f64 {
    (1.0 + weight * reg) * base
}

/// Breakdown of the regularized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub total: f64,
    pub base: f64,
    pub reg: f64,
    pub grad: LossGrad,
}

/// The regularized sequence loss with gradients by the product rule. With
/// `weight = 0` this is exactly [`sequence_loss`].
pub fn objective(phi: &Matrix, origin: usize, log_n: &Matrix, lookahead: usize, weight: f64) -> Result<Objective> {
    let mut g = sequence_loss(phi, origin, log_n, lookahead)?;
    let base = g.loss;
    if weight == 0.0 {
        return Ok(Objective {
            total: base,
            base,
            reg: balance_regularizer(phi),
            grad: g,
        });
    }
    let reg = balance_regularizer(phi);
    let factor = 1.0 + weight * reg;
    let dreg = balance_regularizer_grad(phi);
    for (d, r) in g.dphi.as_mut_slice().iter_mut().zip(dreg.as_slice()) {
        *d = factor * *d + weight * base * r;
    }
    g.d_logn.as_mut_slice().iter_mut().for_each(|d| *d *= factor);
    let total = regularized_loss(base, reg, weight);
    g.loss = total;
    Ok(Objective {
        total,
        base,
        reg,
        grad: g,
    })
}
