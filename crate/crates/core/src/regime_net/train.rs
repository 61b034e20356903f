//! Full-window AdaMax training with best-of-N restarts.

use serde::{Deserialize, Serialize};

use super::{BackboneSpec, Normalization, RegimeNetModel};
use crate::error::{Error, Result};
use crate::hmm::HmmParams;
use crate::matrix::Matrix;
use crate::nn::{loss::objective, Objective};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Random,
    Hmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window_days: usize,
    pub attempts: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Weight of the balance regularizer; 0 disables it.
    pub reg_weight: f64,
    pub init: InitMode,
    pub lookahead: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window_days: 2000,
            attempts: 5,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            reg_weight: 0.0,
            init: InitMode::Random,
            lookahead: 5,
            k: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, spec: &BackboneSpec) -> Result<()> {
        if self.attempts == 0 {
            return Err(Error::Config("attempts must be at least 1".into()));
        }
        if self.k == 0 || self.lookahead == 0 {
            return Err(Error::Config("regime count and lookahead must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.reg_weight >= 0.0) {
            return Err(Error::Config(
                "learning rate must be positive, decay and regularizer weight non-negative".into(),
            ));
        }
        if self.window_days <= spec.min_history() + self.lookahead {
            return Err(Error::Config(format!(
                "window of {} days is too short for receptive field {} and lookahead {}",
                self.window_days,
                spec.min_history(),
                self.lookahead
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptReport {
    pub seed: u64,
    /// Objective before each epoch's update.
    pub losses: Vec<f64>,
    /// Objective after the last update.
    pub final_loss: Option<f64>,
    /// Mean in-sample probability of each regime.
    pub regime_shares: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub attempts: Vec<AttemptReport>,
    pub selected: usize,
}

struct Trained {
    model: RegimeNetModel,
    report: AttemptReport,
}

fn evaluate(
    model: &mut RegimeNetModel,
    xs: &Matrix,
    lookahead: usize,
    weight: f64,
    backprop: bool,
) -> Result<(Objective, Matrix)> {
    let end = xs.rows() - 1;
    let (feats, cache) = model.backbone.forward(&model.store, xs, end);
    let k = model.k;
    let mut phi = Matrix::zeros(feats.rows(), k);
    let mut logits = vec![0.0; k];
    for m in 0..feats.rows() {
        model
            .head
            .forward_into(&model.store, feats.row(m), &mut logits, phi.row_mut(m));
    }
    let log_n = model.gmm.log_densities(&model.store, xs);
    let obj = objective(&phi, model.backbone.origin(), &log_n, lookahead, weight)?;
    if !obj.total.is_finite() {
        return Err(Error::NonFinite {
            index: 0,
            context: "training objective".into(),
        });
    }
    if backprop {
        model.store.zero_grad();
        model.gmm.backward(&mut model.store, xs, &obj.grad.d_logn);
        let mut d_feats = Matrix::zeros(feats.rows(), feats.cols());
        for m in 0..feats.rows() {
            model.head.backward(
                &mut model.store,
                feats.row(m),
                phi.row(m),
                obj.grad.dphi.row(m),
                Some(d_feats.row_mut(m)),
            );
        }
        model.backbone.backward(&mut model.store, xs, &cache, &d_feats);
    }
    Ok((obj, phi))
}

impl RegimeNetModel {
    /// Training objective on `xs` (normalized units) with the model's
    /// lookahead. Gradients are left in the parameter store.
    pub fn objective_with_gradients(&mut self, xs: &Matrix, reg_weight: f64) -> Result<Objective> {
        self.check_window(xs)?;
        let j = self.lookahead();
        evaluate(self, xs, j, reg_weight, true).map(|(obj, _)| obj)
    }

    /// Objective value only.
    pub fn objective_value(&self, xs: &Matrix, reg_weight: f64) -> Result<f64> {
        self.check_window(xs)?;
        evaluate(&mut self.clone(), xs, self.lookahead(), reg_weight, false).map(|(obj, _)| obj.total)
    }

    fn check_window(&self, xs: &Matrix) -> Result<()> {
        if xs.cols() != self.n_assets() {
            return Err(Error::DimensionMismatch {
                expected: self.n_assets(),
                got: xs.cols(),
            });
        }
        if xs.rows() < self.spec().min_history() + 1 {
            return Err(Error::InsufficientData {
                needed: self.spec().min_history() + 1,
                got: xs.rows(),
            });
        }
        Ok(())
    }
}

fn column_means(phi: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; phi.cols()];
    for row in phi.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= phi.rows().max(1) as f64);
    means
}

fn run_attempt(mut model: RegimeNetModel, xs: &Matrix, config: &TrainConfig, seed: u64) -> Trained {
    let mut report = AttemptReport {
        seed,
        losses: Vec::with_capacity(config.epochs),
        final_loss: None,
        regime_shares: Vec::new(),
        error: None,
    };
    let outcome = (|| -> Result<Matrix> {
        for _ in 0..config.epochs {
            let (obj, _) = evaluate(&mut model, xs, config.lookahead, config.reg_weight, true)?;
            report.losses.push(obj.total);
            model.store.adamax_step(config.learning_rate, config.weight_decay)?;
        }
        let (obj, phi) = evaluate(&mut model, xs, config.lookahead, config.reg_weight, false)?;
        report.final_loss = Some(obj.total);
        Ok(phi)
    })();
    match outcome {
        Ok(phi) => report.regime_shares = column_means(&phi),
        Err(e) => {
            log::debug!("training attempt with seed {seed} aborted: {e}");
            report.error = Some(e.to_string());
        }
    }
    Trained { model, report }
}

/// Trains `config.attempts` independently seeded models on the trailing
/// `config.window_days` rows of `window` and keeps the one with the lowest
/// final objective (lowest index on ties). Regimes of the result are
/// ordered bull first.
pub fn train(
    window: &Matrix,
    spec: &BackboneSpec,
    config: &TrainConfig,
    hmm: Option<&HmmParams>,
) -> Result<(RegimeNetModel, TrainReport)> {
    config.validate(spec)?;
    if window.rows() < config.window_days {
        return Err(Error::InsufficientData {
            needed: config.window_days,
            got: window.rows(),
        });
    }
    if config.init == InitMode::Hmm && hmm.is_none() {
        return Err(Error::Config("HMM initialization requested without an HMM".into()));
    }
    let raw = window.slice_rows(window.rows() - config.window_days, window.rows());
    let norm = Normalization::fit(&raw)?;
    let xs = norm.apply(&raw);
    let n = raw.cols();

    let mut base = RegimeNetModel::new(spec.clone(), config.k, n, config.lookahead, norm)?;
    if let (InitMode::Hmm, Some(h)) = (config.init, hmm) {
        base.init_gmm_from_hmm(h)?;
    }

    let mut best: Option<(f64, usize, RegimeNetModel)> = None;
    let mut reports = Vec::with_capacity(config.attempts);
    for a in 0..config.attempts {
        let seed = derive_seed(config.seed, &["attempt", &a.to_string()]);
        let mut rng = rng_from_seed(seed);
        let mut model = base.clone();
        model.init_network(&mut rng);
        if config.init == InitMode::Random {
            model.init_gmm_random(&mut rng);
        }
        let trained = run_attempt(model, &xs, config, seed);
        if let Some(loss) = trained.report.final_loss {
            if best.as_ref().map_or(true, |(b, _, _)| loss < *b) {
                best = Some((loss, a, trained.model));
            }
        }
        reports.push(trained.report);
    }
    let Some((_, selected, mut model)) = best else {
        return Err(Error::TrainingFailed(format!(
            "all {} attempts aborted: {}",
            config.attempts,
            reports.last().and_then(|r| r.error.clone()).unwrap_or_default()
        )));
    };
    model.store.reset_optimizer();
    let perm = model.bull_first_order();
    model.permute_regimes(&perm);
    let shares = reports[selected].regime_shares.clone();
    reports[selected].regime_shares = perm.iter().map(|&p| shares[p]).collect();
    Ok((
        model,
        TrainReport {
            attempts: reports,
            selected,
        },
    ))
}
