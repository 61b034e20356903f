//! Single-layer LSTM cell with gate order (input, forget, candidate, output)
//! and backpropagation through time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::store::{ParamId, ParamStore};
use crate::matrix::Matrix;

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// `4h x n`.
    pub w: ParamId,
    /// `4h x h`.
    pub u: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub hidden: usize,
}

/// Per-step activations recorded for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    /// `T x h` hidden outputs.
    pub h: Matrix,
    pub c: Matrix,
    /// `T x 4h` activated gates.
    pub gates: Matrix,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, hidden: usize) -> Self {
        Self {
            w: store.add(format!("{name}.w"), &[4 * hidden, n_in]),
            u: store.add(format!("{name}.u"), &[4 * hidden, hidden]),
            b: store.add(format!("{name}.b"), &[4 * hidden]),
            n_in,
            hidden,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.n_in + self.hidden
    }

    pub fn init_uniform<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let fan = self.fan_in();
        store.init_uniform(self.w, fan, rng);
        store.init_uniform(self.u, fan, rng);
        store.init_uniform(self.b, fan, rng);
    }

    /// One step; overwrites `h` and `c` in place and returns the activated
    /// gates when `gates` is given.
    pub fn step(&self, store: &ParamStore, x: &[f64], h: &mut [f64], c: &mut [f64], gates: Option<&mut [f64]>) {
        let hs = self.hidden;
        let (w, u, b) = (store.value(self.w), store.value(self.u), store.value(self.b));
        let mut g = vec![0.0; 4 * hs];
        for (r, gr) in g.iter_mut().enumerate() {
            let mut z = b[r];
            z += w[r * self.n_in..(r + 1) * self.n_in]
                .iter()
                .zip(x)
                .map(|(a, v)| a * v)
                .sum::<f64>();
            z += u[r * hs..(r + 1) * hs].iter().zip(h.iter()).map(|(a, v)| a * v).sum::<f64>();
            *gr = if (2 * hs..3 * hs).contains(&r) { z.tanh() } else { sigmoid(z) };
        }
        for j in 0..hs {
            let (i, f, cand, o) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
            c[j] = f * c[j] + i * cand;
            h[j] = o * c[j].tanh();
        }
        if let Some(out) = gates {
            out.copy_from_slice(&g);
        }
    }

    pub fn forward_sequence(&self, store: &ParamStore, xs: &Matrix, h0: &[f64], c0: &[f64]) -> LstmTrace {
        let (t_len, hs) = (xs.rows(), self.hidden);
        let mut trace = LstmTrace {
            h: Matrix::zeros(t_len, hs),
            c: Matrix::zeros(t_len, hs),
            gates: Matrix::zeros(t_len, 4 * hs),
            h0: h0.to_vec(),
            c0: c0.to_vec(),
        };
        let mut h = h0.to_vec();
        let mut c = c0.to_vec();
        for t in 0..t_len {
            self.step(store, xs.row(t), &mut h, &mut c, Some(trace.gates.row_mut(t)));
            trace.h.row_mut(t).copy_from_slice(&h);
            trace.c.row_mut(t).copy_from_slice(&c);
        }
        trace
    }

    /// BPTT given `dh_out[t] = dL/dh_t` from downstream; accumulates
    /// parameter gradients and returns `dL/dx`.
    pub fn backward_sequence(&self, store: &mut ParamStore, xs: &Matrix, trace: &LstmTrace, dh_out: &Matrix) -> Matrix {
        let (t_len, hs, n) = (xs.rows(), self.hidden, self.n_in);
        let mut gw = vec![0.0; 4 * hs * n];
        let mut gu = vec![0.0; 4 * hs * hs];
        let mut gb = vec![0.0; 4 * hs];
        let mut dx = Matrix::zeros(t_len, n);
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        let mut dz = vec![0.0; 4 * hs];
        let (w, u) = (store.value(self.w), store.value(self.u));

        for t in (0..t_len).rev() {
            let g = trace.gates.row(t);
            let c_t = trace.c.row(t);
            let c_prev = if t == 0 { &trace.c0[..] } else { trace.c.row(t - 1) };
            let h_prev = if t == 0 { &trace.h0[..] } else { trace.h.row(t - 1) };
            for j in 0..hs {
                let (i, f, cand, o) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
                let dh = dh_out.get(t, j) + dh_next[j];
                let tc = c_t[j].tanh();
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                dz[j] = dc * cand * i * (1.0 - i);
                dz[hs + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[2 * hs + j] = dc * i * (1.0 - cand * cand);
                dz[3 * hs + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next.fill(0.0);
            let xrow = xs.row(t);
            for (r, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gb[r] += g;
                for k in 0..n {
                    gw[r * n + k] += g * xrow[k];
                    dx.row_mut(t)[k] += g * w[r * n + k];
                }
                for k in 0..hs {
                    gu[r * hs + k] += g * h_prev[k];
                    dh_next[k] += g * u[r * hs + k];
                }
            }
        }
        for (id, g) in [(self.w, gw), (self.u, gu), (self.b, gb)] {
            for (d, v) in store.grad_mut(id).iter_mut().zip(g) {
                *d += v;
            }
        }
        dx
    }
}
