//! Model identifiers, fitting and simulation entry points shared by the
//! backtest and the command line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{fit_gaussian, MvGaussian};
use crate::hmm::{baum_welch_trace, forward_backward, EmConfig, HmmParams};
use crate::matrix::Matrix;
use crate::regime_net::{train, BackboneSpec, InitMode, NeuralSampler, RegimeNetModel, TrainConfig, TrainReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scenario::{ClassicSampler, HmmSampler, PathSampler};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Classic,
    Hmm,
    Neural {
        backbone: BackboneSpec,
        init: InitMode,
        reg_weight: f64,
    },
}

/// A model id such as `classic`, `hmm`, `cnn`, `lstm-hmm` or `lstm-hmm-reg1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    id: String,
    kind: ModelKind,
}

impl ModelSpec {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn is_neural(&self) -> bool {
        matches!(self.kind, ModelKind::Neural { .. })
    }

    /// Rows of history a sampler needs.
    pub fn min_history(&self) -> usize {
        match &self.kind {
            ModelKind::Neural { backbone, .. } => backbone.min_history(),
            _ => 1,
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let id = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("unknown model id '{s}'"));
        let mut parts = id.split('-');
        let base = parts.next().ok_or_else(bad)?;
        let backbone = match base {
            "classic" | "hmm" => {
                if parts.next().is_some() {
                    return Err(bad());
                }
                let kind = if base == "classic" {
                    ModelKind::Classic
                } else {
                    ModelKind::Hmm
                };
                return Ok(ModelSpec { id, kind });
            }
            "ff" => BackboneSpec::ffn(),
            "cnn" => BackboneSpec::tcn(),
            "lstm" => BackboneSpec::lstm(),
            _ => return Err(bad()),
        };
        let mut init = InitMode::Random;
        let mut reg_weight = 0.0;
        let mut seen_init = false;
        let mut seen_reg = false;
        for p in parts {
            if p == "hmm" && !seen_init && !seen_reg {
                init = InitMode::Hmm;
                seen_init = true;
            } else if let Some(w) = p.strip_prefix("reg").filter(|_| !seen_reg) {
                reg_weight = w.parse::<f64>().ok().filter(|w| *w >= 0.0 && w.is_finite()).ok_or_else(bad)?;
                seen_reg = true;
            } else {
                return Err(bad());
            }
        }
        Ok(ModelSpec {
            id,
            kind: ModelKind::Neural {
                backbone,
                init,
                reg_weight,
            },
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

pub fn parse_models(ids: &[String]) -> Result<Vec<ModelSpec>> {
    let mut out: Vec<ModelSpec> = Vec::with_capacity(ids.len());
    for id in ids {
        let spec: ModelSpec = id.parse()?;
        if out.iter().any(|m| m.id == spec.id) {
            return Err(Error::Config(format!("model '{}' listed twice", spec.id)));
        }
        out.push(spec);
    }
    if out.is_empty() {
        return Err(Error::Config("no models configured".into()));
    }
    Ok(out)
}

/// Estimation settings shared by all models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    /// Number of regimes for the HMM and the networks.
    pub regimes: usize,
    pub em: EmConfig,
    /// Baum-Welch restarts; the highest likelihood wins.
    pub hmm_attempts: usize,
    /// Network training; `window_days`, `k`, `init`, `reg_weight` and
    /// `seed` are set per fit.
    pub train: TrainConfig,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            regimes: 2,
            em: EmConfig::default(),
            hmm_attempts: 1,
            train: TrainConfig::default(),
        }
    }
}

/// An estimated model ready for simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Classic { gaussian: MvGaussian },
    Hmm { params: HmmParams },
    Neural { model: RegimeNetModel, report: TrainReport },
}

impl FittedModel {
    pub fn n_assets(&self) -> usize {
        match self {
            FittedModel::Classic { gaussian } => gaussian.dim(),
            FittedModel::Hmm { params } => params.dim(),
            FittedModel::Neural { model, .. } => model.n_assets(),
        }
    }

    pub fn min_history(&self) -> usize {
        match self {
            FittedModel::Neural { model, .. } => model.spec().min_history(),
            _ => 1,
        }
    }

    /// A sampler continuing from `history` (raw daily returns). The HMM
    /// starts from the last smoothed distribution of `history`.
    pub fn sampler<'a>(&'a self, history: &Matrix) -> Result<Box<dyn PathSampler + 'a>> {
        if history.cols() != self.n_assets() {
            return Err(Error::DimensionMismatch {
                expected: self.n_assets(),
                got: history.cols(),
            });
        }
        Ok(match self {
            FittedModel::Classic { gaussian } => Box::new(ClassicSampler {
                gaussian: gaussian.clone(),
            }),
            FittedModel::Hmm { params } => {
                let smoothed = forward_backward(params, history)?;
                Box::new(HmmSampler {
                    params: params.clone(),
                    last_smoothed: smoothed.last().to_vec(),
                })
            }
            FittedModel::Neural { model, .. } => Box::new(NeuralSampler::new(model, history)?),
        })
    }
}

/// Baum-Welch with restarts, keeping the highest final likelihood.
pub fn fit_hmm(window: &Matrix, settings: &FitSettings, seed: u64) -> Result<HmmParams> {
    let mut best: Option<(f64, HmmParams)> = None;
    let mut last_err = None;
    for a in 0..settings.hmm_attempts.max(1) {
        let mut rng = rng_from_seed(derive_seed(seed, &["em", &a.to_string()]));
        match baum_welch_trace(window, settings.regimes, &settings.em, &mut rng) {
            Ok(fit) => {
                let ll = *fit.log_likelihoods.last().expect("trace is never empty");
                if best.as_ref().map_or(true, |(b, _)| ll > *b) {
                    best = Some((ll, fit.params));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, p)), _) => Ok(p),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one attempt runs"),
    }
}

/// Fits `spec` on `window`. `master` and `tag` (usually the date) key the
/// random streams; HMM initialization reuses the exact HMM that the `hmm`
/// model would fit under the same key.
pub fn fit_model(spec: &ModelSpec, window: &Matrix, settings: &FitSettings, master: u64, tag: &str) -> Result<FittedModel> {
    let hmm_seed = derive_seed(master, &["hmm", tag, "fit"]);
    match &spec.kind {
        ModelKind::Classic => Ok(FittedModel::Classic {
            gaussian: fit_gaussian(window)?,
        }),
        ModelKind::Hmm => Ok(FittedModel::Hmm {
            params: fit_hmm(window, settings, hmm_seed)?,
        }),
        ModelKind::Neural {
            backbone,
            init,
            reg_weight,
        } => {
            let hmm = match init {
                InitMode::Hmm => Some(fit_hmm(window, settings, hmm_seed)?),
                InitMode::Random => None,
            };
            let cfg = TrainConfig {
                window_days: window.rows(),
                k: settings.regimes,
                init: *init,
                reg_weight: *reg_weight,
                seed: derive_seed(master, &[&spec.id, tag, "fit"]),
                ..settings.train.clone()
            };
            let (model, report) = train(window, backbone, &cfg, hmm.as_ref())?;
            log::debug!(
                "{} {tag}: selected attempt {} with loss {:?}",
                spec.id,
                report.selected,
                report.attempts[report.selected].final_loss
            );
            Ok(FittedModel::Neural { model, report })
        }
    }
}
