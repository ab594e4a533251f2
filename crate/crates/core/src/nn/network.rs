use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DropoutSource, Layer, LayerCache};
use super::loss::{loss_gradient, loss_value, LossKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Everything [`Network::backward`] needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub mode: Mode,
    pub layers: Vec<LayerCache>,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Dropout scale vector recorded for layer `index`, if any.
    pub fn dropout_mask(&self, index: usize) -> Option<&[f64]> {
        match self.layers.get(index) {
            Some(LayerCache::Mask(Some(m))) => Some(m),
            _ => None,
        }
    }
}

/// Gradient for one parameter block, flattened like [`Layer::params_flat`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBlock {
    pub layer: usize,
    pub name: &'static str,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    pub blocks: Vec<GradBlock>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        let blocks = net
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.param_names()
                    .iter()
                    .zip(l.params_flat())
                    .map(move |(name, p)| GradBlock {
                        layer: i,
                        name,
                        values: vec![0.0; p.len()],
                    })
            })
            .collect();
        Gradients { blocks }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::contract("gradient shapes differ"));
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.values
                .iter_mut()
                .zip(&b.values)
                .for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.blocks
            .iter_mut()
            .for_each(|b| b.values.iter_mut().for_each(|v| *v *= k));
    }

    pub fn same_shape(&self, other: &Gradients) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.layer == b.layer && a.values.len() == b.values.len())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.values.iter().all(|v| v.is_finite()))
    }
}

/// An ordered stack of layers with a single loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_width: usize,
    pub(crate) layers: Vec<Layer>,
    loss: LossKind,
}

impl Network {
    /// Validates that adjacent layer widths line up.
    pub fn new(input_width: usize, layers: Vec<Layer>, loss: LossKind) -> Result<Network> {
        let mut width = input_width;
        for (i, layer) in layers.iter().enumerate() {
            width = layer.output_width(width).ok_or(Error::Dimension {
                layer: i,
                expected: layer.fixed_input_width().unwrap_or(width),
                actual: width,
            })?;
        }
        Ok(Network {
            input_width,
            layers,
            loss,
        })
    }

    /// The per-node network: Dense(input→hidden), ReLU, Dense(hidden→1), Sigmoid, BCE.
    /// Weights start at zero; call [`Network::init_params`].
    pub fn mini_nn(input_size: usize, hidden_size: usize) -> Network {
        Network::new(
            input_size,
            vec![
                Layer::dense(input_size, hidden_size),
                Layer::Activation(Activation::Relu),
                Layer::dense(hidden_size, 1),
                Layer::Activation(Activation::Sigmoid),
            ],
            LossKind::Bce,
        )
        .expect("mini network shapes are consistent")
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .fold(self.input_width, |w, l| l.output_width(w).unwrap_or(0))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters flattened in visiting order.
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.params_flat().into_iter().flatten())
            .collect()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Dropout { .. }))
    }

    /// Re-draws every weight from a generator seeded with `seed`; biases become zero.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            layer.init(&mut rng);
        }
    }

    pub fn initialized(mut self, seed: u64) -> Network {
        self.init_params(seed);
        self
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.input_width,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn run(
        &self,
        x: &[f64],
        mode: Mode,
        mut source: Source<'_>,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut signal = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let dropout = match &mut source {
                Source::Bypass => DropoutSource::Bypass,
                Source::Draw(rng) => DropoutSource::Draw(&mut **rng),
                Source::Frozen(cache) => DropoutSource::Frozen(cache.dropout_mask(i)),
            };
            let (out, cache) = layer.forward(&signal, dropout);
            signal = out;
            caches.push(cache);
        }
        if signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite network output".into()));
        }
        Ok((
            signal.clone(),
            ForwardCache {
                mode,
                layers: caches,
                output: signal,
            },
        ))
    }

    /// Forward pass. In `Train` mode dropout masks are drawn from `rng`;
    /// `Infer` never touches `rng` and treats dropout as identity.
    pub fn forward(
        &self,
        x: &[f64],
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        match mode {
            Mode::Train => self.run(x, mode, Source::Draw(rng)),
            Mode::Infer => self.run(x, mode, Source::Bypass),
        }
    }

    /// Infer-mode output without a cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.run(x, Mode::Infer, Source::Bypass).map(|(y, _)| y)
    }

    /// Forward pass reusing the dropout masks recorded in `masks`.
    pub fn forward_frozen(
        &self,
        x: &[f64],
        masks: &ForwardCache,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.run(x, masks.mode, Source::Frozen(masks))
    }

    pub fn loss_value(&self, pred: &[f64], target: &[f64]) -> Result<f64> {
        loss_value(self.loss, pred, target)
    }

    /// Backpropagates this network's loss through a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, target: &[f64]) -> Result<Gradients> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::contract(format!(
                "cache has {} layers, network has {}",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        let mut grad = loss_gradient(self.loss, &cache.output, target)?;
        let mut blocks = Vec::new();
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let (gx, params) = layer.backward(lc, &grad, i > 0)?;
            for (name, values) in layer.param_names().iter().zip(params).rev() {
                blocks.push(GradBlock {
                    layer: i,
                    name,
                    values,
                });
            }
            grad = gx;
        }
        blocks.reverse();
        Ok(Gradients { blocks })
    }
}

enum Source<'a> {
    Bypass,
    Draw(&'a mut dyn RngCore),
    Frozen(&'a ForwardCache),
}
