//! A small MLP stack with hand-written backpropagation.
//!
//! Parameters live in one flat `Vec<f64>` so optimizers, soft updates and
//! checkpoints can treat a network as a plain vector. Hidden layers are
//! `h' = skip(h) + relu(bn(W h + b))`, where `skip` is the identity for equal
//! widths, a learned projection otherwise, and absent when residual
//! connections are off.

mod adam;
mod checkpoint;
mod forward;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_params, read_params, save_params, write_params, FORMAT_VERSION};
pub use forward::{backward, forward, forward_row, Gradients, Mode, Tape};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running-average update weight for batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputHead {
    Linear,
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub residual: bool,
    pub batch_norm: bool,
    pub output_head: OutputHead,
}

/// Offsets of one hidden layer's tensors inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HiddenLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: usize,
    pub b: usize,
    /// gamma at `bn`, beta at `bn + out_dim`
    pub bn: Option<usize>,
    pub proj: Option<usize>,
    /// index into the running statistics when batch norm is on
    pub bn_slot: Option<usize>,
}

impl HiddenLayout {
    pub fn identity_skip(&self, residual: bool) -> bool {
        residual && self.in_dim == self.out_dim
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct OutputLayout {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub hidden: Vec<HiddenLayout>,
    pub output: OutputLayout,
    pub n_params: usize,
    pub n_bn: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize, output_head: OutputHead) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            residual: false,
            batch_norm: false,
            output_head,
        }
    }

    pub fn with_residual(mut self, on: bool) -> Self {
        self.residual = on;
        self
    }

    pub fn with_batch_norm(mut self, on: bool) -> Self {
        self.batch_norm = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("network widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut off = 0;
        let mut n_bn = 0;
        let mut hidden = Vec::with_capacity(self.hidden_dims.len());
        let mut in_dim = self.input_dim;
        for &out_dim in &self.hidden_dims {
            let w = off;
            off += out_dim * in_dim;
            let b = off;
            off += out_dim;
            let (bn, bn_slot) = if self.batch_norm {
                let at = off;
                off += 2 * out_dim;
                n_bn += 1;
                (Some(at), Some(n_bn - 1))
            } else {
                (None, None)
            };
            let proj = if self.residual && in_dim != out_dim {
                let at = off;
                off += out_dim * in_dim;
                Some(at)
            } else {
                None
            };
            hidden.push(HiddenLayout {
                in_dim,
                out_dim,
                w,
                b,
                bn,
                proj,
                bn_slot,
            });
            in_dim = out_dim;
        }
        let w = off;
        off += self.output_dim * in_dim;
        let b = off;
        off += self.output_dim;
        Layout {
            hidden,
            output: OutputLayout {
                in_dim,
                out_dim: self.output_dim,
                w,
                b,
            },
            n_params: off,
            n_bn,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().n_params
    }
}

/// Batch-norm running statistics for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub spec: MlpSpec,
    pub values: Vec<f64>,
    pub version: u64,
    pub running: Vec<RunningStats>,
}

impl NetworkParams {
    /// All-zero parameters (batch-norm scales set to one).
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let mut values = vec![0.0; layout.n_params];
        let mut running = Vec::with_capacity(layout.n_bn);
        for h in &layout.hidden {
            if let Some(at) = h.bn {
                values[at..at + h.out_dim].iter_mut().for_each(|g| *g = 1.0);
                running.push(RunningStats {
                    mean: vec![0.0; h.out_dim],
                    var: vec![1.0; h.out_dim],
                });
            }
        }
        Ok(Self {
            spec,
            values,
            version: 0,
            running,
        })
    }

    /// Weights and biases uniform in ±1/√fan_in.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        let layout = p.spec.layout();
        let mut fill = |values: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            values.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
        };
        for h in &layout.hidden {
            fill(&mut p.values[h.w..h.b + h.out_dim], h.in_dim);
            if let Some(at) = h.proj {
                fill(&mut p.values[at..at + h.out_dim * h.in_dim], h.in_dim);
            }
        }
        let o = layout.output;
        fill(&mut p.values[o.w..o.b + o.out_dim], o.in_dim);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericalFault("non-finite network parameter".into()))
        }
    }

    /// Fold a train-mode tape's batch statistics into the running averages.
    pub fn update_running_stats(&mut self, tape: &Tape) {
        for (stats, (mean, var)) in self.running.iter_mut().zip(tape.batch_stats()) {
            for (r, &m) in stats.mean.iter_mut().zip(mean) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
            }
            for (r, &v) in stats.var.iter_mut().zip(var) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
            }
        }
    }
}

/// θ′ ← η·θ + (1−η)·θ′, running statistics included.
pub fn soft_update(target: &mut NetworkParams, live: &NetworkParams, eta: f64) -> Result<()> {
    if target.spec != live.spec {
        return Err(Error::SpecMismatch(format!(
            "soft update between {:?} and {:?}",
            target.spec, live.spec
        )));
    }
    let mix = |t: &mut f64, l: f64| *t = eta * l + (1.0 - eta) * *t;
    target
        .values
        .iter_mut()
        .zip(&live.values)
        .for_each(|(t, &l)| mix(t, l));
    for (ts, ls) in target.running.iter_mut().zip(&live.running) {
        ts.mean.iter_mut().zip(&ls.mean).for_each(|(t, &l)| mix(t, l));
        ts.var.iter_mut().zip(&ls.var).for_each(|(t, &l)| mix(t, l));
    }
    target.version += 1;
    Ok(())
}
