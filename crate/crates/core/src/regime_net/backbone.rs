//! The three temporal backbones, a shared interface for full-window
//! forward/backward passes and incremental simulation state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{Activation, Dense, LstmCell, LstmTrace, ParamStore, TcnStack};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackboneSpec {
    Ffn { receptive_field: usize, hidden: Vec<usize> },
    Tcn { layers: usize, channels: usize },
    Lstm { hidden: usize },
}

impl BackboneSpec {
    /// 10-day window through 32, 16 and 8 tanh units.
    pub fn ffn() -> Self {
        BackboneSpec::Ffn {
            receptive_field: 10,
            hidden: vec![32, 16, 8],
        }
    }

    /// Seven dilated layers of three channels (255-day receptive field).
    pub fn tcn() -> Self {
        BackboneSpec::Tcn { layers: 7, channels: 3 }
    }

    pub fn lstm() -> Self {
        BackboneSpec::Lstm { hidden: 5 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackboneSpec::Ffn { .. } => "ffn",
            BackboneSpec::Tcn { .. } => "tcn",
            BackboneSpec::Lstm { .. } => "lstm",
        }
    }

    /// `None` for the recurrent backbone.
    pub fn receptive_field(&self) -> Option<usize> {
        match self {
            BackboneSpec::Ffn { receptive_field, .. } => Some(*receptive_field),
            BackboneSpec::Tcn { layers, .. } => Some(1 + 2 * ((1usize << layers) - 1)),
            BackboneSpec::Lstm { .. } => None,
        }
    }

    /// Minimum history needed to emit a regime distribution.
    pub fn min_history(&self) -> usize {
        self.receptive_field().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            BackboneSpec::Ffn { receptive_field, hidden } => *receptive_field >= 1 && hidden.iter().all(|&h| h > 0),
            BackboneSpec::Tcn { layers, channels } => (1..=20).contains(layers) && *channels > 0,
            BackboneSpec::Lstm { hidden } => *hidden > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid {} backbone shape", self.name())))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Backbone {
    Ffn { layers: Vec<Dense>, r: usize },
    Tcn { stack: TcnStack },
    Lstm { cell: LstmCell },
}

/// Activations of one full-window pass.
pub(crate) enum Cache {
    Ffn {
        inputs: Vec<Vec<f64>>,
        acts: Vec<Vec<Vec<f64>>>,
    },
    Tcn {
        acts: Vec<Matrix>,
    },
    Lstm {
        trace: LstmTrace,
    },
}

impl Backbone {
    pub(crate) fn build(store: &mut ParamStore, spec: &BackboneSpec, n: usize) -> (Self, usize) {
        match spec {
            BackboneSpec::Ffn { receptive_field, hidden } => {
                let mut n_in = receptive_field * n;
                let mut layers = Vec::new();
                for (l, &h) in hidden.iter().enumerate() {
                    layers.push(Dense::new(store, &format!("ffn.{l}"), n_in, h, Activation::Tanh));
                    n_in = h;
                }
                (
                    Backbone::Ffn {
                        layers,
                        r: *receptive_field,
                    },
                    n_in,
                )
            }
            BackboneSpec::Tcn { layers, channels } => {
                let stack = TcnStack::new(store, "tcn", n, *channels, *layers, Activation::Tanh);
                (Backbone::Tcn { stack }, *channels)
            }
            BackboneSpec::Lstm { hidden } => (
                Backbone::Lstm {
                    cell: LstmCell::new(store, "lstm", n, *hidden),
                },
                *hidden,
            ),
        }
    }

    pub(crate) fn init_uniform<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        match self {
            Backbone::Ffn { layers, .. } => layers.iter().for_each(|l| l.init_uniform(store, rng)),
            Backbone::Tcn { stack } => stack.init_uniform(store, rng),
            Backbone::Lstm { cell } => cell.init_uniform(store, rng),
        }
    }

    /// First time index whose output sees a full receptive field.
    pub(crate) fn origin(&self) -> usize {
        match self {
            Backbone::Ffn { r, .. } => r - 1,
            Backbone::Tcn { stack } => stack.receptive_field() - 1,
            Backbone::Lstm { .. } => 0,
        }
    }

    fn ffn_input(r: usize, xs: &Matrix, t: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(r * xs.cols());
        for s in t + 1 - r..=t {
            v.extend_from_slice(xs.row(s));
        }
        v
    }

    /// Features for times `origin..end` (one row each).
    pub(crate) fn forward(&self, store: &ParamStore, xs: &Matrix, end: usize) -> (Matrix, Cache) {
        let origin = self.origin();
        let rows = end.saturating_sub(origin);
        match self {
            Backbone::Ffn { layers, r } => {
                let width = layers.last().map_or(r * xs.cols(), |l| l.n_out);
                let mut feats = Matrix::zeros(rows, width);
                let mut inputs = Vec::with_capacity(rows);
                let mut acts = Vec::with_capacity(rows);
                for m in 0..rows {
                    let x = Self::ffn_input(*r, xs, origin + m);
                    let mut per_layer = Vec::with_capacity(layers.len());
                    let mut cur = x.clone();
                    for l in layers {
                        let mut y = vec![0.0; l.n_out];
                        l.forward_into(store, &cur, &mut y);
                        per_layer.push(y.clone());
                        cur = y;
                    }
                    feats.row_mut(m).copy_from_slice(&cur);
                    inputs.push(x);
                    acts.push(per_layer);
                }
                (feats, Cache::Ffn { inputs, acts })
            }
            Backbone::Tcn { stack } => {
                let acts = stack.forward(store, &xs.slice_rows(0, end.min(xs.rows())));
                let top = acts.last().expect("non-empty");
                (top.slice_rows(origin, origin + rows), Cache::Tcn { acts })
            }
            Backbone::Lstm { cell } => {
                let h0 = vec![0.0; cell.hidden];
                let trace = cell.forward_sequence(store, &xs.slice_rows(0, end.min(xs.rows())), &h0, &h0);
                (trace.h.slice_rows(origin, origin + rows), Cache::Lstm { trace })
            }
        }
    }

    /// Accumulates backbone gradients given `d_feats` (rows as in
    /// [`Backbone::forward`]).
    pub(crate) fn backward(&self, store: &mut ParamStore, xs: &Matrix, cache: &Cache, d_feats: &Matrix) {
        let origin = self.origin();
        match (self, cache) {
            (Backbone::Ffn { layers, .. }, Cache::Ffn { inputs, acts }) => {
                for m in 0..d_feats.rows() {
                    let mut d = d_feats.row(m).to_vec();
                    for (l, layer) in layers.iter().enumerate().rev() {
                        let x = if l == 0 { &inputs[m] } else { &acts[m][l - 1] };
                        if l == 0 {
                            layer.backward(store, x, &acts[m][l], &d, None);
                        } else {
                            let mut dx = vec![0.0; layer.n_in];
                            layer.backward(store, x, &acts[m][l], &d, Some(&mut dx));
                            d = dx;
                        }
                    }
                }
            }
            (Backbone::Tcn { stack }, Cache::Tcn { acts }) => {
                let top = acts.last().expect("non-empty");
                let mut d_top = Matrix::zeros(top.rows(), top.cols());
                for m in 0..d_feats.rows() {
                    d_top.row_mut(origin + m).copy_from_slice(d_feats.row(m));
                }
                stack.backward(store, acts, d_top);
            }
            (Backbone::Lstm { cell }, Cache::Lstm { trace }) => {
                let mut dh = Matrix::zeros(trace.h.rows(), cell.hidden);
                for m in 0..d_feats.rows() {
                    dh.row_mut(origin + m).copy_from_slice(d_feats.row(m));
                }
                let xs = xs.slice_rows(0, trace.h.rows());
                cell.backward_sequence(store, &xs, trace, &dh);
            }
            _ => unreachable!("cache built by a different backbone"),
        }
    }
}

/// Incremental state for sequential sampling: the features of the latest
/// day, and how to absorb one more (normalized) day.
#[derive(Debug, Clone)]
pub(crate) enum StreamState<'a> {
    Ffn {
        /// Last `r` normalized rows, oldest first, flattened.
        window: Vec<f64>,
    },
    Tcn {
        history: &'a [Matrix],
        /// Per layer activation rows appended after the history.
        ext: Vec<Vec<Vec<f64>>>,
    },
    Lstm {
        h: Vec<f64>,
        c: Vec<f64>,
    },
}

/// What a stream starts from, shared by all paths of one simulation.
#[derive(Debug, Clone)]
pub(crate) enum StreamSeed {
    Ffn { window: Vec<f64> },
    Tcn { history: Vec<Matrix> },
    Lstm { h: Vec<f64>, c: Vec<f64> },
}

impl Backbone {
    pub(crate) fn stream_seed(&self, store: &ParamStore, xs: &Matrix) -> StreamSeed {
        let t_len = xs.rows();
        match self {
            Backbone::Ffn { r, .. } => StreamSeed::Ffn {
                window: Self::ffn_input(*r, xs, t_len - 1),
            },
            Backbone::Tcn { stack } => {
                let keep = stack.receptive_field().min(t_len);
                let acts = stack.forward(store, &xs.slice_rows(t_len - keep, t_len));
                StreamSeed::Tcn { history: acts }
            }
            Backbone::Lstm { cell } => {
                let mut h = vec![0.0; cell.hidden];
                let mut c = vec![0.0; cell.hidden];
                for t in 0..t_len {
                    cell.step(store, xs.row(t), &mut h, &mut c, None);
                }
                StreamSeed::Lstm { h, c }
            }
        }
    }

    pub(crate) fn open<'a>(&self, seed: &'a StreamSeed) -> StreamState<'a> {
        match seed {
            StreamSeed::Ffn { window } => StreamState::Ffn { window: window.clone() },
            StreamSeed::Tcn { history } => StreamState::Tcn {
                history,
                ext: vec![Vec::new(); history.len()],
            },
            StreamSeed::Lstm { h, c } => StreamState::Lstm {
                h: h.clone(),
                c: c.clone(),
            },
        }
    }

    /// Features of the most recent day.
    pub(crate) fn features(&self, store: &ParamStore, state: &StreamState<'_>, out: &mut Vec<f64>) {
        out.clear();
        match (self, state) {
            (Backbone::Ffn { layers, .. }, StreamState::Ffn { window }) => {
                let mut cur = window.clone();
                for l in layers {
                    let mut y = vec![0.0; l.n_out];
                    l.forward_into(store, &cur, &mut y);
                    cur = y;
                }
                out.extend_from_slice(&cur);
            }
            (Backbone::Tcn { .. }, StreamState::Tcn { history, ext }) => {
                let top = ext.last().expect("layers");
                match top.last() {
                    Some(row) => out.extend_from_slice(row),
                    None => {
                        let h = history.last().expect("layers");
                        out.extend_from_slice(h.row(h.rows() - 1));
                    }
                }
            }
            (Backbone::Lstm { .. }, StreamState::Lstm { h, .. }) => out.extend_from_slice(h),
            _ => unreachable!("stream opened by a different backbone"),
        }
    }

    pub(crate) fn push(&self, store: &ParamStore, state: &mut StreamState<'_>, x: &[f64]) {
        match (self, state) {
            (Backbone::Ffn { .. }, StreamState::Ffn { window }) => {
                let n = x.len();
                window.drain(..n);
                window.extend_from_slice(x);
            }
            (Backbone::Tcn { stack }, StreamState::Tcn { history, ext }) => {
                ext[0].push(x.to_vec());
                for (l, layer) in stack.layers.iter().enumerate() {
                    let hist = &history[l];
                    let ext_in = &ext[l];
                    // time of the new row relative to the end of the history
                    let now = ext_in.len() - 1;
                    let tap = |back: usize| -> Option<&[f64]> {
                        if back <= now {
                            Some(&ext_in[now - back][..])
                        } else {
                            let from_end = back - now;
                            hist.rows().checked_sub(from_end).map(|r| hist.row(r))
                        }
                    };
                    let d = layer.dilation;
                    let taps = [tap(2 * d), tap(d), tap(0)];
                    let mut y = vec![0.0; layer.c_out];
                    layer.step(store, taps, &mut y);
                    ext[l + 1].push(y);
                }
            }
            (Backbone::Lstm { cell }, StreamState::Lstm { h, c }) => cell.step(store, x, h, c, None),
            _ => unreachable!("stream opened by a different backbone"),
        }
    }
}
