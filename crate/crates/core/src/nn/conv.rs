//! Causal dilated 1-d convolutions with kernel 3 and their stack.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::Activation;
use super::store::{ParamId, ParamStore};
use crate::matrix::Matrix;

pub const KERNEL: usize = 3;

/// Output at `t` reads inputs at `t - 2d`, `t - d` and `t` (taps 0, 1, 2);
/// positions before the sequence start are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalConv {
    /// `c_out x c_in x 3`.
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub dilation: usize,
    pub activation: Activation,
}

impl CausalConv {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, dilation: usize, activation: Activation) -> Self {
        Self {
            w: store.add(format!("{name}.w"), &[c_out, c_in, KERNEL]),
            b: store.add(format!("{name}.b"), &[c_out]),
            c_in,
            c_out,
            dilation,
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * KERNEL
    }

    pub fn init_uniform<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        store.init_uniform(self.w, self.fan_in(), rng);
        store.init_uniform(self.b, self.fan_in(), rng);
    }

    #[inline]
    fn tap_index(&self, o: usize, c: usize, k: usize) -> usize {
        (o * self.c_in + c) * KERNEL + k
    }

    /// One output position from explicit taps; `None` stands for padding.
    pub fn step(&self, store: &ParamStore, taps: [Option<&[f64]>; KERNEL], out: &mut [f64]) {
        let w = store.value(self.w);
        let b = store.value(self.b);
        for (o, y) in out.iter_mut().enumerate() {
            let mut z = b[o];
            for (k, tap) in taps.iter().enumerate() {
                if let Some(x) = tap {
                    for (c, xc) in x.iter().enumerate() {
                        z += w[self.tap_index(o, c, k)] * xc;
                    }
                }
            }
            *y = self.activation.apply(z);
        }
    }

    fn tap_time(&self, t: usize, k: usize) -> Option<usize> {
        t.checked_sub((KERNEL - 1 - k) * self.dilation)
    }

    pub fn forward(&self, store: &ParamStore, input: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(input.rows(), self.c_out);
        for t in 0..input.rows() {
            let taps = [0, 1, 2].map(|k| self.tap_time(t, k).map(|s| input.row(s)));
            self.step(store, taps, out.row_mut(t));
        }
        out
    }

    /// Accumulates parameter gradients; adds `dL/d input` into `d_input`
    /// when given.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        input: &Matrix,
        output: &Matrix,
        d_output: &Matrix,
        mut d_input: Option<&mut Matrix>,
    ) {
        let t_len = input.rows();
        let mut dz = Matrix::zeros(t_len, self.c_out);
        for t in 0..t_len {
            for o in 0..self.c_out {
                dz.set(t, o, d_output.get(t, o) * self.activation.grad_from_output(output.get(t, o)));
            }
        }
        if let Some(d_in) = d_input.as_deref_mut() {
            let w = store.value(self.w);
            for t in 0..t_len {
                for k in 0..KERNEL {
                    let Some(s) = self.tap_time(t, k) else { continue };
                    for o in 0..self.c_out {
                        let g = dz.get(t, o);
                        if g == 0.0 {
                            continue;
                        }
                        let row = d_in.row_mut(s);
                        for (c, d) in row.iter_mut().enumerate() {
                            *d += g * w[self.tap_index(o, c, k)];
                        }
                    }
                }
            }
        }
        let mut gw = vec![0.0; self.c_out * self.c_in * KERNEL];
        let mut gb = vec![0.0; self.c_out];
        for t in 0..t_len {
            for o in 0..self.c_out {
                let g = dz.get(t, o);
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                for k in 0..KERNEL {
                    if let Some(s) = self.tap_time(t, k) {
                        for (c, x) in input.row(s).iter().enumerate() {
                            gw[self.tap_index(o, c, k)] += g * x;
                        }
                    }
                }
            }
        }
        for (d, g) in store.grad_mut(self.w).iter_mut().zip(gw) {
            *d += g;
        }
        for (d, g) in store.grad_mut(self.b).iter_mut().zip(gb) {
            *d += g;
        }
    }
}

/// Stack of causal convolutions with dilations 1, 2, 4, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnStack {
    pub layers: Vec<CausalConv>,
}

impl TcnStack {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, channels: usize, depth: usize, activation: Activation) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let cin = if l == 0 { c_in } else { channels };
                CausalConv::new(store, &format!("{name}.{l}"), cin, channels, 1 << l, activation)
            })
            .collect();
        Self { layers }
    }

    pub fn channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.c_out)
    }

    /// `1 + (kernel - 1) * Σ dilations`.
    pub fn receptive_field(&self) -> usize {
        1 + (KERNEL - 1) * self.layers.iter().map(|l| l.dilation).sum::<usize>()
    }

    pub fn init_uniform<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        for l in &self.layers {
            l.init_uniform(store, rng);
        }
    }

    /// Activations of every layer; element 0 is the input itself.
    pub fn forward(&self, store: &ParamStore, input: &Matrix) -> Vec<Matrix> {
        let mut acts = vec![input.clone()];
        for l in &self.layers {
            let next = l.forward(store, acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    /// Backpropagates `d_top` (gradient w.r.t. the last layer's output).
    pub fn backward(&self, store: &mut ParamStore, acts: &[Matrix], d_top: Matrix) -> Matrix {
        let mut d = d_top;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut d_in = Matrix::zeros(acts[l].rows(), acts[l].cols());
            layer.backward(store, &acts[l], &acts[l + 1], &d, Some(&mut d_in));
            d = d_in;
        }
        d
    }
}
