//! Training loops, inference and evaluation for tries and standalone networks.
//!
//! Every node network trains only on the samples routed to it. Routing depends
//! on topology and feature indices alone, so each sample's serving node is
//! resolved once before training starts.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::nn::{loss_value, Gradients, LossKind, Mode, Network, OptimizerKind, OptimizerState};
use crate::trie::{NodeId, RoutingPolicy, Trie};

/// Which optimizers step after each update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    /// Only the optimizers of nodes that served a sample in the update.
    RouteLocal,
    /// Every node's optimizer, with zero gradients for nodes that served
    /// nothing. Adam states that already hold moments keep decaying them.
    GlobalStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub step_mode: StepMode,
    pub routing: RoutingPolicy,
    /// 1 trains online; larger values average gradients over the batch.
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    /// The logic-gate setup: Adam at lr 0.01, BCE, bit routing, online, paper order.
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            epochs: 10,
            optimizer: OptimizerKind::adam(),
            loss: LossKind::Bce,
            step_mode: StepMode::RouteLocal,
            routing: RoutingPolicy::BitConsume,
            batch_size: 1,
            seed: 1,
            shuffle: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the per-sample losses of the epoch.
    pub mean_loss: f64,
    /// Loss of the epoch's final update (a single sample when training online).
    pub last_loss: f64,
    pub samples_per_leaf: BTreeMap<NodeId, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<M> {
    pub epochs: Vec<EpochRecord>,
    pub model: M,
    pub wall_clock_secs: f64,
    /// Every per-sample loss of the final epoch, in visiting order.
    pub last_epoch_losses: Vec<f64>,
}

impl<M> TrainReport<M> {
    pub fn final_mean_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |r| r.mean_loss)
    }
}

/// Per-batch bookkeeping for the case-study procedure.
enum BatchMode {
    Plain,
    /// Outputs of each batch are gathered in a zeroed `B × num_classes` block
    /// before the loss is taken.
    OutputBlock {
        num_classes: usize,
    },
}

fn check_networks<'a>(
    nets: impl Iterator<Item = &'a Network>,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<()> {
    for net in nets {
        if net.input_width() != data.feature_width() {
            return Err(Error::contract(format!(
                "data width {} does not match network input width {}",
                data.feature_width(),
                net.input_width()
            )));
        }
        if net.loss() != cfg.loss {
            return Err(Error::contract(format!(
                "configured loss {} differs from the network's {}",
                cfg.loss.as_str(),
                net.loss().as_str()
            )));
        }
    }
    Ok(())
}

fn run_epochs(
    nets: &mut [&mut Network],
    ids: &[NodeId],
    serving: &[usize],
    data: &Dataset,
    cfg: &TrainConfig,
    mode: BatchMode,
) -> Result<(Vec<EpochRecord>, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizers = nets
        .iter()
        .map(|_| OptimizerState::new(cfg.optimizer, cfg.lr))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut losses = Vec::with_capacity(data.len());

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        losses.clear();
        let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut last_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let mut block = match mode {
                BatchMode::Plain => None,
                BatchMode::OutputBlock { num_classes } => Some(Matrix::zeros(b, num_classes)),
            };
            let mut pending: BTreeMap<usize, Gradients> = BTreeMap::new();
            let mut batch_loss = 0.0;
            for (row, &i) in batch.iter().enumerate() {
                let sample = &data.samples()[i];
                let node = serving[i];
                let net = &*nets[node];
                let (out, cache) = net.forward(&sample.features, Mode::Train, &mut rng)?;
                let target = cfg.loss.target_for_label(sample.label, out.len());
                let out = match &mut block {
                    Some(m) => {
                        if out.len() != m.cols() {
                            return Err(Error::contract(format!(
                                "network emits {} scores for {} classes",
                                out.len(),
                                m.cols()
                            )));
                        }
                        m.row_mut(row).copy_from_slice(&out);
                        m.row(row)
                    }
                    None => &out[..],
                };
                let l = loss_value(cfg.loss, out, &target)?;
                let mut g = net.backward(&cache, &target)?;
                if b > 1 {
                    g.scale(1.0 / b as f64);
                }
                match pending.get_mut(&node) {
                    Some(acc) => acc.add_assign(&g)?,
                    None => {
                        pending.insert(node, g);
                    }
                }
                losses.push(l);
                batch_loss += l;
                *counts.entry(ids[node]).or_default() += 1;
            }
            last_loss = batch_loss / b as f64;
            match cfg.step_mode {
                StepMode::RouteLocal => {
                    for (node, g) in &pending {
                        optimizers[*node].step(nets[*node], g)?;
                    }
                }
                StepMode::GlobalStep => {
                    for (node, opt) in optimizers.iter_mut().enumerate() {
                        match pending.get(&node) {
                            Some(g) => opt.step(nets[node], g)?,
                            None => opt.step_zero(nets[node]),
                        }
                    }
                }
            }
        }
        records.push(EpochRecord {
            epoch,
            mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            last_loss,
            samples_per_leaf: counts,
        });
    }
    Ok((records, losses))
}

fn serving_nodes(
    trie: &Trie,
    data: &Dataset,
    policy: &RoutingPolicy,
) -> Result<(Vec<NodeId>, Vec<usize>)> {
    if trie.is_empty() {
        return Err(Error::Structure("cannot train an empty trie".into()));
    }
    let ids: Vec<NodeId> = (0..trie.len()).map(NodeId).collect();
    let serving = data
        .samples()
        .iter()
        .map(|s| trie.leaf_of(&s.features, policy).map(|id| id.0))
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, serving))
}

fn train_trie(
    mut trie: Trie,
    data: &Dataset,
    cfg: &TrainConfig,
    mode: BatchMode,
) -> Result<TrainReport<Trie>> {
    let started = Instant::now();
    let (ids, serving) = serving_nodes(&trie, data, &cfg.routing)?;
    check_networks(trie.nodes().iter().map(|n| &n.net), data, cfg)?;
    let (epochs, last) = {
        let mut nets: Vec<&mut Network> = trie.nodes_mut().iter_mut().map(|n| &mut n.net).collect();
        run_epochs(&mut nets, &ids, &serving, data, cfg, mode)?
    };
    Ok(TrainReport {
        epochs,
        model: trie,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        last_epoch_losses: last,
    })
}

/// Online (or mini-batch) training of a trie: route each sample, update the
/// serving node's network, step optimizers per `cfg.step_mode`.
pub fn train_tann(trie: Trie, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport<Trie>> {
    train_trie(trie, data, cfg, BatchMode::Plain)
}

/// Batched cross-entropy training: each batch's scores are gathered in a
/// `B × num_classes` block, the loss is the batch mean, and only the optimizers
/// of nodes that served a row step.
pub fn train_tann_batched(
    trie: Trie,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainReport<Trie>> {
    if cfg.loss != LossKind::CrossEntropy {
        return Err(Error::contract(
            "batched trie training requires cross-entropy loss",
        ));
    }
    let cfg = TrainConfig {
        step_mode: StepMode::RouteLocal,
        ..cfg.clone()
    };
    let num_classes = data.num_classes();
    train_trie(trie, data, &cfg, BatchMode::OutputBlock { num_classes })
}

/// The same loop without routing, for a single network.
pub fn train_single(
    mut net: Network,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainReport<Network>> {
    let started = Instant::now();
    check_networks(std::iter::once(&net), data, cfg)?;
    let serving = vec![0; data.len()];
    let (epochs, last) = run_epochs(
        &mut [&mut net],
        &[NodeId(0)],
        &serving,
        data,
        cfg,
        BatchMode::Plain,
    )?;
    Ok(TrainReport {
        epochs,
        model: net,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        last_epoch_losses: last,
    })
}

/// Infer-mode output of the network at the end of `x`'s route.
pub fn infer(trie: &Trie, x: &[f64], policy: &RoutingPolicy) -> Result<Vec<f64>> {
    let node = trie.node(trie.leaf_of(x, policy)?);
    if node.net.input_width() != x.len() {
        return Err(Error::contract(format!(
            "input width {} does not match node input width {}",
            x.len(),
            node.net.input_width()
        )));
    }
    node.net.predict(x)
}

#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    Network(&'a Network),
    Trie(&'a Trie),
}

impl<'a> From<&'a Network> for Model<'a> {
    fn from(n: &'a Network) -> Self {
        Model::Network(n)
    }
}

impl<'a> From<&'a Trie> for Model<'a> {
    fn from(t: &'a Trie) -> Self {
        Model::Trie(t)
    }
}

impl Model<'_> {
    fn serve(&self, x: &[f64], policy: &RoutingPolicy) -> Result<(Vec<f64>, LossKind)> {
        match self {
            Model::Network(n) => Ok((n.predict(x)?, n.loss())),
            Model::Trie(t) => {
                let node = t.node(t.leaf_of(x, policy)?);
                Ok((infer(t, x, policy)?, node.net.loss()))
            }
        }
    }
}

/// Class decision: a single output is thresholded, wider outputs take the
/// first maximal score.
pub fn predict_class(output: &[f64], threshold: f64) -> usize {
    if output.len() == 1 {
        (output[0] >= threshold) as usize
    } else {
        output
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0
    }
}

pub fn evaluate<'a>(
    model: impl Into<Model<'a>>,
    data: &Dataset,
    policy: &RoutingPolicy,
    threshold: f64,
) -> Result<MetricsReport> {
    let model = model.into();
    if data.is_empty() {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    let mut cm = ConfusionMatrix::new(data.num_classes());
    let mut loss_sum = 0.0;
    for s in data.samples() {
        let (out, loss) = model.serve(&s.features, policy)?;
        let consistent = if out.len() == 1 {
            data.num_classes() == 2
        } else {
            out.len() == data.num_classes()
        };
        if !consistent {
            return Err(Error::contract(format!(
                "{}-wide output cannot score {} classes",
                out.len(),
                data.num_classes()
            )));
        }
        loss_sum += loss_value(loss, &out, &loss.target_for_label(s.label, out.len()))?;
        cm.record(s.label, predict_class(&out, threshold))?;
    }
    MetricsReport::from_confusion(cm, loss_sum / data.len() as f64)
}
