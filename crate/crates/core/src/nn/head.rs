//! Softmax regime head: affine map to k logits, then softmax.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Activation, Dense};
use super::store::ParamStore;
use crate::error::Result;

/// Max-subtracted softmax.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// `dL/dz` from `dL/dφ` through the softmax Jacobian.
pub fn softmax_backward(phi: &[f64], dphi: &[f64], dz: &mut [f64]) {
    let dot: f64 = phi.iter().zip(dphi).map(|(p, d)| p * d).sum();
    for ((z, p), d) in dz.iter_mut().zip(phi).zip(dphi) {
        *z = p * (d - dot);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeHead {
    pub dense: Dense,
}

impl RegimeHead {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, k: usize) -> Self {
        Self {
            dense: Dense::new(store, name, n_in, k, Activation::Identity),
        }
    }

    pub fn k(&self) -> usize {
        self.dense.n_out
    }

    pub fn init_uniform<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        self.dense.init_uniform(store, rng);
    }

    pub fn forward(&self, store: &ParamStore, features: &[f64]) -> Result<Vec<f64>> {
        let logits = self.dense.forward(store, features)?;
        Ok(softmax(&logits))
    }

    pub fn forward_into(&self, store: &ParamStore, features: &[f64], logits: &mut [f64], phi: &mut [f64]) {
        self.dense.forward_into(store, features, logits);
        softmax_into(logits, phi);
    }

    /// Accumulates head gradients from `dL/dφ` and adds `dL/d features`.
    pub fn backward(&self, store: &mut ParamStore, features: &[f64], phi: &[f64], dphi: &[f64], dfeatures: Option<&mut [f64]>) {
        let mut dz = vec![0.0; phi.len()];
        softmax_backward(phi, dphi, &mut dz);
        // identity activation: y is only consulted for its derivative
        self.dense.backward(store, features, phi, &dz, dfeatures);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::max_store_gradient_error;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    #[test]
    fn zero_logits_are_uniform() {
        for k in 1..6 {
            let p = softmax(&vec![0.0; k]);
            assert!(p.iter().all(|v| (v - 1.0 / k as f64).abs() < 1e-15));
        }
        let mut s = ParamStore::new();
        let head = RegimeHead::new(&mut s, "h", 4, 3);
        let phi = head.forward(&s, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(phi.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let p = softmax(&[100.0, -100.0]);
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] > 0.0 && p[1] < 1e-80);
        let p = softmax(&[1000.0, 999.0]);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn head_gradients() {
        let mut rng = rng_from_seed(2);
        let mut s = ParamStore::new();
        let head = RegimeHead::new(&mut s, "h", 4, 3);
        head.init_uniform(&mut s, &mut rng);
        let x = [0.3, -0.8, 1.5, 0.1];
        let c = [0.5, -2.0, 1.0];
        // a non-linear function of φ
        let loss = |s: &ParamStore| {
            let p = head.forward(s, &x).unwrap();
            p.iter().zip(&c).map(|(a, b)| b * a.ln()).sum::<f64>()
        };
        s.zero_grad();
        let phi = head.forward(&s, &x).unwrap();
        let dphi: Vec<f64> = phi.iter().zip(&c).map(|(p, b)| b / p).collect();
        head.backward(&mut s, &x, &phi, &dphi, None);
        assert!(max_store_gradient_error(&mut s, loss) < 1e-5);
    }

    proptest! {
        #[test]
        fn softmax_properties(logits in prop::collection::vec(-50.0f64..50.0, 1..6), shift in -100.0f64..100.0) {
            let p = softmax(&logits);
            prop_assert!(p.iter().all(|v| *v > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
