use rand::Rng;
use serde::{Deserialize, Serialize};

use super::store::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activated output `y`.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// `y = act(W x + b)` with `W` stored `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            w: store.add(format!("{name}.w"), &[n_out, n_in]),
            b: store.add(format!("{name}.b"), &[n_out]),
            n_in,
            n_out,
            activation,
        }
    }

    pub fn init_uniform<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        store.init_uniform(self.w, self.n_in, rng);
        store.init_uniform(self.b, self.n_in, rng);
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::DimensionMismatch {
                expected: self.n_in,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_out];
        self.forward_into(store, x, &mut y);
        Ok(y)
    }

    pub fn forward_into(&self, store: &ParamStore, x: &[f64], y: &mut [f64]) {
        let w = store.value(self.w);
        let b = store.value(self.b);
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.n_in..(o + 1) * self.n_in];
            let z = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            *yo = self.activation.apply(z);
        }
    }

    /// Accumulates parameter gradients given `dy = dL/dy`; adds `dL/dx`
    /// into `dx` when requested.
    pub fn backward(&self, store: &mut ParamStore, x: &[f64], y: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        let dz: Vec<f64> = dy
            .iter()
            .zip(y)
            .map(|(g, &yo)| g * self.activation.grad_from_output(yo))
            .collect();
        if let Some(dx) = dx {
            let w = store.value(self.w);
            for (o, &g) in dz.iter().enumerate() {
                if g != 0.0 {
                    let row = &w[o * self.n_in..(o + 1) * self.n_in];
                    for (d, a) in dx.iter_mut().zip(row) {
                        *d += g * a;
                    }
                }
            }
        }
        let gw = store.grad_mut(self.w);
        for (o, &g) in dz.iter().enumerate() {
            if g != 0.0 {
                for (d, c) in gw[o * self.n_in..(o + 1) * self.n_in].iter_mut().zip(x) {
                    *d += g * c;
                }
            }
        }
        for (d, g) in store.grad_mut(self.b).iter_mut().zip(dz.iter()) {
            *d += g;
        }
    }
}
