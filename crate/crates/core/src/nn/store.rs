//! Named parameter tensors with gradient buffers and AdaMax state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;

/// Handle to one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
struct Param {
    name: String,
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
    m: Vec<f64>,
    u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major.
    pub values: Vec<f64>,
}

/// Values only; optimizer state is not persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "ParamSnapshot", into = "ParamSnapshot")]
pub struct ParamStore {
    params: Vec<Param>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a zero-initialized tensor.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let len = shape.iter().product();
        self.params.push(Param {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![0.0; len],
            grad: vec![0.0; len],
            m: vec![0.0; len],
            u: vec![0.0; len],
        });
        ParamId(self.params.len() - 1)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.params[id.0].shape
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].grad
    }

    /// Number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Drops gradients and moment estimates, as after loading a snapshot.
    pub fn reset_optimizer(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
            p.m.fill(0.0);
            p.u.fill(0.0);
        }
        self.step = 0;
    }

    /// Draws every entry from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, id: ParamId, fan_in: usize, rng: &mut R) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        for v in &mut self.params[id.0].value {
            *v = rng.random_range(-bound..=bound);
        }
    }

    /// One AdaMax update with decoupled weight decay applied first.
    /// Fails without touching any parameter if a gradient is not finite.
    pub fn adamax_step(&mut self, learning_rate: f64, weight_decay: f64) -> Result<()> {
        for p in &self.params {
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    index: i,
                    context: format!("gradient of {}", p.name),
                });
            }
        }
        self.step += 1;
        let lr_t = learning_rate / (1.0 - BETA1.powi(self.step.min(i32::MAX as u64) as i32));
        let shrink = 1.0 - learning_rate * weight_decay;
        for p in &mut self.params {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                p.value[i] *= shrink;
                p.m[i] = BETA1 * p.m[i] + (1.0 - BETA1) * g;
                p.u[i] = (BETA2 * p.u[i]).max(g.abs());
                if p.u[i] > 0.0 {
                    p.value[i] -= lr_t * p.m[i] / p.u[i];
                }
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            tensors: self
                .params
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: p.value.clone(),
                })
                .collect(),
        }
    }
}

impl From<ParamSnapshot> for ParamStore {
    fn from(s: ParamSnapshot) -> Self {
        let params = s
            .tensors
            .into_iter()
            .map(|t| {
                let len = t.values.len();
                Param {
                    name: t.name,
                    shape: t.shape,
                    value: t.values,
                    grad: vec![0.0; len],
                    m: vec![0.0; len],
                    u: vec![0.0; len],
                }
            })
            .collect();
        ParamStore { params, step: 0 }
    }
}

impl From<ParamStore> for ParamSnapshot {
    fn from(s: ParamStore) -> Self {
        s.snapshot()
    }
}

impl ParamSnapshot {
    /// Checks that every tensor's value count matches its shape.
    pub fn validate(&self) -> Result<()> {
        for t in &self.tensors {
            let len: usize = t.shape.iter().product();
            if len != t.values.len() {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    got: t.values.len(),
                });
            }
        }
        Ok(())
    }
}
