use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

/// Optimizer family plus its fixed hyperparameters; the learning rate lives
/// in the training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub const fn adam() -> OptimizerKind {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    /// Per parameter block; allocated on the first step.
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd { lr: f64 },
    Adam(AdamState),
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<OptimizerState> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::contract(format!(
                "learning rate {lr} must be positive"
            )));
        }
        Ok(match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd { lr },
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::Adam(AdamState {
                lr,
                beta1,
                beta2,
                epsilon,
                step_count: 0,
                first_moment: Vec::new(),
                second_moment: Vec::new(),
            }),
        })
    }

    pub fn step_count(&self) -> u64 {
        match self {
            OptimizerState::Sgd { .. } => 0,
            OptimizerState::Adam(a) => a.step_count,
        }
    }

    /// Applies one update. SGD: `p ← p − lr·g`. Adam: bias-corrected moments,
    /// `p ← p − lr·m̂/(√v̂ + ε)`, with the step counter advanced once per call.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        check_shapes(net, grads)?;
        self.apply(net, Some(grads));
        Ok(())
    }

    /// A step with identically zero gradients, as issued to optimizers whose
    /// network took no part in the current sample.
    pub fn step_zero(&mut self, net: &mut Network) {
        self.apply(net, None);
    }

    fn apply(&mut self, net: &mut Network, grads: Option<&Gradients>) {
        let mut blocks = net.layers.iter_mut().flat_map(|l| l.params_mut());
        match self {
            OptimizerState::Sgd { lr } => {
                let Some(grads) = grads else { return };
                for (mut p, g) in blocks.by_ref().zip(&grads.blocks) {
                    p.for_each(|i, v| *v -= *lr * g.values[i]);
                }
            }
            OptimizerState::Adam(state) => {
                state.step_count += 1;
                let t = state.step_count as i32;
                let c1 = 1.0 - state.beta1.powi(t);
                let c2 = 1.0 - state.beta2.powi(t);
                for (k, mut p) in blocks.enumerate() {
                    if state.first_moment.len() <= k {
                        state.first_moment.push(vec![0.0; p.scalar_len()]);
                        state.second_moment.push(vec![0.0; p.scalar_len()]);
                    }
                    let m = &mut state.first_moment[k];
                    let v = &mut state.second_moment[k];
                    let g = grads.map(|g| g.blocks[k].values.as_slice());
                    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.epsilon);
                    p.for_each(|i, param| {
                        let gi = g.map_or(0.0, |g| g[i]);
                        m[i] = b1 * m[i] + (1.0 - b1) * gi;
                        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        *param -= lr * m_hat / (v_hat.sqrt() + eps);
                    });
                }
            }
        }
    }
}

fn check_shapes(net: &mut Network, grads: &Gradients) -> Result<()> {
    let shapes: Vec<(usize, usize)> = net
        .layers
        .iter_mut()
        .enumerate()
        .flat_map(|(i, l)| {
            l.params_mut()
                .into_iter()
                .map(move |p| (i, p.scalar_len()))
                .collect::<Vec<_>>()
        })
        .collect();
    let ok = shapes.len() == grads.blocks.len()
        && shapes
            .iter()
            .zip(&grads.blocks)
            .all(|(&(layer, len), b)| b.layer == layer && b.values.len() == len);
    if ok {
        Ok(())
    } else {
        Err(Error::contract(
            "gradients are not shaped like the network parameters",
        ))
    }
}
