//! Neural regime-switching model: a temporal backbone emits regime
//! probabilities over an unconditioned Gaussian-mixture head.

mod backbone;
mod simulate;
mod train;

use serde::{Deserialize, Serialize};

pub use backbone::BackboneSpec;
pub use simulate::NeuralSampler;
pub use train::{train, AttemptReport, InitMode, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::gaussian::MvGaussian;
use crate::hmm::HmmParams;
use crate::matrix::Matrix;
use crate::nn::{GmmHead, ParamSnapshot, ParamStore, RegimeHead};
use crate::rng::Rng;
use backbone::Backbone;

/// Per-asset mean and unbiased variance of a training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Normalization {
    pub fn fit(window: &Matrix) -> Result<Self> {
        let (t, n) = (window.rows(), window.cols());
        if t < 2 {
            return Err(Error::InsufficientData { needed: 2, got: t });
        }
        let mut mean = vec![0.0; n];
        for row in window.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        let mut var = vec![0.0; n];
        for row in window.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= (t - 1) as f64);
        // Rounding leaves a constant column with a tiny positive variance.
        if let Some(j) = (0..n).position(|j| !(var[j] > (1e-12 * mean[j].abs()).powi(2))) {
            return Err(Error::Data(format!("column {j} has zero variance")));
        }
        Ok(Self { mean, var })
    }

    /// `(x - mean) / var`.
    pub fn apply(&self, window: &Matrix) -> Matrix {
        let mut out = window.clone();
        for t in 0..out.rows() {
            self.apply_row(out.row_mut(t));
        }
        out
    }

    pub fn apply_row(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.var) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert_row(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.var) {
            *v = *v * s + m;
        }
    }

    /// Expresses a raw-scale Gaussian in normalized coordinates:
    /// `μ' = D⁻¹(μ - m)`, `L' = D⁻¹L` with `D = diag(var)`.
    pub fn to_normalized(&self, g: &MvGaussian) -> MvGaussian {
        let n = g.dim();
        let mean = g
            .mean()
            .iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((mu, m), s)| (mu - m) / s)
            .collect();
        let mut l = g.factor().to_vec();
        for a in 0..n {
            for b in 0..n {
                l[a * n + b] /= self.var[a];
            }
        }
        MvGaussian::from_factor_unchecked(mean, l)
    }

    pub fn to_raw(&self, g: &MvGaussian) -> MvGaussian {
        let n = g.dim();
        let mean = g
            .mean()
            .iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((mu, m), s)| mu * s + m)
            .collect();
        let mut l = g.factor().to_vec();
        for a in 0..n {
            for b in 0..n {
                l[a * n + b] *= self.var[a];
            }
        }
        MvGaussian::from_factor_unchecked(mean, l)
    }
}

/// Backbone, regime head, Gaussian-mixture head and the normalization of
/// the data it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct RegimeNetModel {
    spec: BackboneSpec,
    k: usize,
    n: usize,
    lookahead: usize,
    norm: Normalization,
    store: ParamStore,
    backbone: Backbone,
    head: RegimeHead,
    gmm: GmmHead,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    spec: BackboneSpec,
    k: usize,
    n: usize,
    lookahead: usize,
    norm: Normalization,
    params: ParamSnapshot,
}

impl From<RegimeNetModel> for ModelRepr {
    fn from(m: RegimeNetModel) -> Self {
        ModelRepr {
            params: m.store.snapshot(),
            spec: m.spec,
            k: m.k,
            n: m.n,
            lookahead: m.lookahead,
            norm: m.norm,
        }
    }
}

impl TryFrom<ModelRepr> for RegimeNetModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        r.params.validate()?;
        if r.norm.mean.len() != r.n || r.norm.var.len() != r.n || r.norm.var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Data("invalid normalization constants".into()));
        }
        let mut model = RegimeNetModel::new(r.spec, r.k, r.n, r.lookahead, r.norm)?;
        let loaded = ParamStore::from(r.params);
        let ids: Vec<_> = model.store.ids().collect();
        if loaded.ids().count() != ids.len() {
            return Err(Error::Data("parameter set does not match the backbone".into()));
        }
        for id in ids {
            let name = model.store.name(id).to_string();
            let src = loaded
                .find(&name)
                .ok_or_else(|| Error::Data(format!("missing parameter tensor {name}")))?;
            if loaded.shape(src) != model.store.shape(id) {
                return Err(Error::Data(format!("parameter tensor {name} has the wrong shape")));
            }
            model.store.value_mut(id).copy_from_slice(loaded.value(src));
        }
        Ok(model)
    }
}

impl RegimeNetModel {
    /// A model with all parameters zero (uniform regime probabilities).
    pub fn new(spec: BackboneSpec, k: usize, n: usize, lookahead: usize, norm: Normalization) -> Result<Self> {
        spec.validate()?;
        if k == 0 || n == 0 || lookahead == 0 {
            return Err(Error::Config("regime count, dimension and lookahead must be positive".into()));
        }
        if norm.mean.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: norm.mean.len(),
            });
        }
        let mut store = ParamStore::new();
        let (backbone, width) = Backbone::build(&mut store, &spec, n);
        let head = RegimeHead::new(&mut store, "head", width, k);
        let gmm = GmmHead::new(&mut store, "gmm", k, n);
        Ok(Self {
            spec,
            k,
            n,
            lookahead,
            norm,
            store,
            backbone,
            head,
            gmm,
        })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn lookahead(&self) -> usize {
        self.lookahead
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count()
    }

    /// Regime Gaussians in normalized coordinates.
    pub fn normalized_components(&self) -> Vec<MvGaussian> {
        self.gmm.components(&self.store)
    }

    /// Regime Gaussians in raw return units.
    pub fn components(&self) -> Vec<MvGaussian> {
        self.normalized_components().iter().map(|g| self.norm.to_raw(g)).collect()
    }

    /// Draws every backbone and head weight from `U(-1/√i, 1/√i)`.
    pub fn init_network(&mut self, rng: &mut Rng) {
        self.backbone.init_uniform(&mut self.store, rng);
        self.head.init_uniform(&mut self.store, rng);
    }

    /// Random mixture head: normal means, identity factors.
    pub fn init_gmm_random(&mut self, rng: &mut Rng) {
        self.gmm.init_random(&mut self.store, rng);
    }

    /// Seeds the mixture head with an HMM's regimes, rescaled into the
    /// normalized input space.
    pub fn init_gmm_from_hmm(&mut self, hmm: &HmmParams) -> Result<()> {
        if hmm.k() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: hmm.k(),
            });
        }
        if hmm.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: hmm.dim(),
            });
        }
        let comps: Vec<_> = hmm.regimes().iter().map(|g| self.norm.to_normalized(g)).collect();
        self.gmm.set_components(&mut self.store, &comps)
    }

    /// HMM-seeded mixture head plus uniform backbone weights.
    pub fn hmm_initialize(&mut self, hmm: &HmmParams, rng: &mut Rng) -> Result<()> {
        self.init_gmm_from_hmm(hmm)?;
        self.init_network(rng);
        Ok(())
    }

    /// Regime probabilities for every time in `origin..end` of a normalized
    /// window.
    pub(crate) fn phi_rows(&self, xs: &Matrix, end: usize) -> Matrix {
        let (feats, _) = self.backbone.forward(&self.store, xs, end);
        let mut phi = Matrix::zeros(feats.rows(), self.k);
        let mut logits = vec![0.0; self.k];
        for m in 0..feats.rows() {
            self.head.forward_into(&self.store, feats.row(m), &mut logits, phi.row_mut(m));
        }
        phi
    }

    /// Regime distribution for the day after `history` (raw returns).
    pub fn regime_probs(&self, history: &Matrix) -> Result<Vec<f64>> {
        if history.cols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: history.cols(),
            });
        }
        let need = self.spec.min_history();
        if history.rows() < need {
            return Err(Error::InsufficientData {
                needed: need,
                got: history.rows(),
            });
        }
        let xs = self.norm.apply(history);
        let phi = self.phi_rows(&xs, xs.rows());
        Ok(phi.row(phi.rows() - 1).to_vec())
    }

    /// In-sample regime probabilities for every day of a raw window that
    /// has a full receptive field; returns the first such index too.
    pub fn in_sample_probs(&self, window: &Matrix) -> Result<(usize, Matrix)> {
        if window.rows() < self.spec.min_history() {
            return Err(Error::InsufficientData {
                needed: self.spec.min_history(),
                got: window.rows(),
            });
        }
        let xs = self.norm.apply(window);
        Ok((self.backbone.origin(), self.phi_rows(&xs, xs.rows())))
    }

    /// Relabels regimes so that new regime `j` is old regime `perm[j]`.
    pub fn permute_regimes(&mut self, perm: &[usize]) {
        let width = self.head.dense.n_in;
        let w = self.store.value(self.head.dense.w).to_vec();
        let b = self.store.value(self.head.dense.b).to_vec();
        let comps = self.gmm.components(&self.store);
        for (j, &p) in perm.iter().enumerate() {
            self.store.value_mut(self.head.dense.w)[j * width..(j + 1) * width].copy_from_slice(&w[p * width..(p + 1) * width]);
            self.store.value_mut(self.head.dense.b)[j] = b[p];
        }
        let permuted: Vec<_> = perm.iter().map(|&p| comps[p].clone()).collect();
        self.gmm.set_components(&mut self.store, &permuted).expect("same shape");
    }

    /// Permutation ordering regimes by first-asset mean, highest first.
    pub fn bull_first_order(&self) -> Vec<usize> {
        let comps = self.normalized_components();
        let mut perm: Vec<usize> = (0..self.k).collect();
        perm.sort_by(|&a, &b| comps[b].mean()[0].total_cmp(&comps[a].mean()[0]).then(a.cmp(&b)));
        perm
    }
}
