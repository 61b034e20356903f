//! Sequential sampling: regime from the network, return from that
//! regime's Gaussian, fed back into the receptive field.

use super::backbone::StreamSeed;
use super::RegimeNetModel;
use crate::error::{Error, Result};
use crate::gaussian::MvGaussian;
use crate::matrix::Matrix;
use crate::rng::{categorical, Rng};
use crate::scenario::PathSampler;

/// A trained model primed with the history that simulation continues.
#[derive(Debug, Clone)]
pub struct NeuralSampler<'a> {
    model: &'a RegimeNetModel,
    seed: StreamSeed,
    components: Vec<MvGaussian>,
}

impl<'a> NeuralSampler<'a> {
    /// `history` holds raw returns, oldest first.
    pub fn new(model: &'a RegimeNetModel, history: &Matrix) -> Result<Self> {
        if history.cols() != model.n {
            return Err(Error::DimensionMismatch {
                expected: model.n,
                got: history.cols(),
            });
        }
        let need = model.spec.min_history();
        if history.rows() < need {
            return Err(Error::InsufficientData {
                needed: need,
                got: history.rows(),
            });
        }
        let xs = model.norm.apply(history);
        Ok(Self {
            seed: model.backbone.stream_seed(&model.store, &xs),
            components: model.normalized_components(),
            model,
        })
    }

    /// Simulated raw returns and the regime drawn for each day.
    pub fn sample_with_regimes(&self, rng: &mut Rng, out: &mut Matrix) -> Vec<usize> {
        let m = self.model;
        let mut state = m.backbone.open(&self.seed);
        let mut feats = Vec::new();
        let mut logits = vec![0.0; m.k];
        let mut phi = vec![0.0; m.k];
        let mut regimes = Vec::with_capacity(out.rows());
        let days = out.rows();
        for day in 0..days {
            m.backbone.features(&m.store, &state, &mut feats);
            m.head.forward_into(&m.store, &feats, &mut logits, &mut phi);
            let s = categorical(rng, &phi);
            let row = out.row_mut(day);
            self.components[s].sample_into(rng, row);
            if day + 1 < days {
                m.backbone.push(&m.store, &mut state, row);
            }
            m.norm.invert_row(row);
            regimes.push(s);
        }
        regimes
    }
}

impl PathSampler for NeuralSampler<'_> {
    fn n_assets(&self) -> usize {
        self.model.n
    }

    fn sample_path(&self, rng: &mut Rng, out: &mut Matrix) {
        self.sample_with_regimes(rng, out);
    }
}

impl RegimeNetModel {
    /// One simulated `horizon x n` path continuing `history`.
    pub fn simulate(&self, history: &Matrix, horizon: usize, rng: &mut Rng) -> Result<Matrix> {
        let sampler = NeuralSampler::new(self, history)?;
        let mut out = Matrix::zeros(horizon, self.n);
        sampler.sample_path(rng, &mut out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regime_net::{BackboneSpec, Normalization};
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn window(t: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        Matrix::from_vec(t, 1, (0..t).map(|_| rng.random_range(-0.02..0.02)).collect()).unwrap()
    }

    fn model(spec: BackboneSpec, w: &Matrix) -> RegimeNetModel {
        let mut m = RegimeNetModel::new(spec, 2, 1, 5, Normalization::fit(w).unwrap()).unwrap();
        let mut rng = rng_from_seed(5);
        m.init_network(&mut rng);
        m.init_gmm_random(&mut rng);
        m
    }

    #[test]
    fn frozen_regime_draws_from_first_gaussian() {
        let w = window(300, 1);
        let mut m = model(BackboneSpec::lstm(), &w);
        let head = m.head.clone();
        m.store.value_mut(head.dense.w).fill(0.0);
        m.store.value_mut(head.dense.b).copy_from_slice(&[400.0, -400.0]);
        let g0 = m.components()[0].clone();
        let sampler = NeuralSampler::new(&m, &w).unwrap();
        let mut rng = rng_from_seed(2);
        let paths = 100_000;
        let mut out = Matrix::zeros(1, 1);
        let mut sum = 0.0;
        for _ in 0..paths {
            let regimes = sampler.sample_with_regimes(&mut rng, &mut out);
            assert_eq!(regimes, vec![0]);
            sum += out.get(0, 0);
        }
        let bound = 3.0 * g0.std_devs()[0] / (paths as f64).sqrt();
        assert!((sum / paths as f64 - g0.mean()[0]).abs() < bound);
    }

    #[test]
    fn zero_horizon_and_determinism() {
        let w = window(300, 2);
        for spec in [BackboneSpec::ffn(), BackboneSpec::tcn(), BackboneSpec::lstm()] {
            let m = model(spec, &w);
            assert_eq!(m.simulate(&w, 0, &mut rng_from_seed(1)).unwrap().rows(), 0);
            let a = m.simulate(&w, 7, &mut rng_from_seed(3)).unwrap();
            let b = m.simulate(&w, 7, &mut rng_from_seed(3)).unwrap();
            assert_eq!(a, b);
        }
        let m = model(BackboneSpec::tcn(), &w);
        assert!(m.simulate(&w.slice_rows(0, 100), 5, &mut rng_from_seed(1)).is_err());
    }

    /// Incremental stream features equal a full forward pass over the
    /// extended history.
    #[test]
    fn stream_matches_full_recompute() {
        let w = window(400, 3);
        for spec in [BackboneSpec::ffn(), BackboneSpec::tcn(), BackboneSpec::lstm()] {
            let m = model(spec, &w);
            let sampler = NeuralSampler::new(&m, &w).unwrap();
            let mut state = m.backbone.open(&sampler.seed);
            let mut xs = m.norm.apply(&w);
            let extra = [0.5, -1.5, 2.0, 0.1, -0.3];
            let mut feats = Vec::new();
            for &x in &extra {
                m.backbone.push(&m.store, &mut state, &[x]);
                let mut grown = xs.clone().into_vec();
                grown.push(x);
                xs = Matrix::from_vec(xs.rows() + 1, 1, grown).unwrap();
                m.backbone.features(&m.store, &state, &mut feats);
                let (full, _) = m.backbone.forward(&m.store, &xs, xs.rows());
                let last = full.row(full.rows() - 1);
                for (a, b) in feats.iter().zip(last) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn feedback_changes_regime_probabilities() {
        let w = window(300, 4);
        for spec in [BackboneSpec::tcn(), BackboneSpec::lstm()] {
            let mut m = model(spec, &w);
            let head = m.head.clone();
            let width = head.dense.n_in;
            for j in 0..width {
                m.store.value_mut(head.dense.w)[j] = 3.0;
            }
            let sampler = NeuralSampler::new(&m, &w).unwrap();
            let probs = |raw: f64| {
                let mut x = [raw];
                m.norm.apply_row(&mut x);
                let mut state = m.backbone.open(&sampler.seed);
                m.backbone.push(&m.store, &mut state, &x);
                let mut feats = Vec::new();
                m.backbone.features(&m.store, &state, &mut feats);
                let mut logits = vec![0.0; 2];
                let mut phi = vec![0.0; 2];
                m.head.forward_into(&m.store, &feats, &mut logits, &mut phi);
                phi
            };
            let up = probs(0.03);
            let down = probs(-0.03);
            assert!((up[0] - down[0]).abs() > 1e-6, "{up:?} {down:?}");
        }
    }
}
