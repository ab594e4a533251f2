//! Comparison architectures for the logic gates and the text models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, LossKind, Network, OptimizerKind};
use crate::train::{StepMode, TrainConfig};
use crate::trie::{RoutingPolicy, Trie};

pub const TEXT_FFN_HIDDEN: [usize; 2] = [1024, 512];
pub const TEXT_RNN_STEPS: usize = 20;
pub const TEXT_RNN_HIDDEN: usize = 128;
pub const DROPOUT_P: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    SimpleDropout,
    TinyCnn,
    TinyRnn,
    ComplexNn,
    TextFfn,
    TextRnn,
}

impl ArchKind {
    /// The four gate architectures in reporting order.
    pub const GATE_KINDS: [ArchKind; 4] = [
        ArchKind::SimpleDropout,
        ArchKind::TinyCnn,
        ArchKind::TinyRnn,
        ArchKind::ComplexNn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::SimpleDropout => "simple_dropout",
            ArchKind::TinyCnn => "cnn",
            ArchKind::TinyRnn => "rnn",
            ArchKind::ComplexNn => "complex",
            ArchKind::TextFfn => "text_ffn",
            ArchKind::TextRnn => "text_rnn",
        }
    }

    pub fn is_text(self) -> bool {
        matches!(self, ArchKind::TextFfn | ArchKind::TextRnn)
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "simple_dropout" | "simple" | "dropout" => Ok(ArchKind::SimpleDropout),
            "cnn" | "tiny_cnn" => Ok(ArchKind::TinyCnn),
            "rnn" | "tiny_rnn" => Ok(ArchKind::TinyRnn),
            "complex" | "complex_nn" => Ok(ArchKind::ComplexNn),
            "text_ffn" | "ffn" => Ok(ArchKind::TextFfn),
            "text_rnn" => Ok(ArchKind::TextRnn),
            other => Err(Error::contract(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub input_size: usize,
    pub num_classes: usize,
    /// Only consulted by the text models; the simple gate net always drops out.
    pub dropout: bool,
}

impl ArchSpec {
    pub fn gate(kind: ArchKind) -> ArchSpec {
        ArchSpec {
            kind,
            input_size: 2,
            num_classes: 2,
            dropout: kind == ArchKind::SimpleDropout,
        }
    }

    pub fn text(kind: ArchKind, input_size: usize, num_classes: usize, dropout: bool) -> ArchSpec {
        ArchSpec {
            kind,
            input_size,
            num_classes,
            dropout,
        }
    }
}

fn dropout_layer() -> Layer {
    Layer::dropout(DROPOUT_P).expect("constant dropout rate is valid")
}

/// Builds and initializes the network for `spec` from `seed`.
pub fn make_network(spec: &ArchSpec, seed: u64) -> Result<Network> {
    use Activation::{Relu, Sigmoid};
    let ArchSpec {
        kind,
        input_size,
        num_classes,
        dropout,
    } = *spec;
    if !kind.is_text() && (input_size != 2 || num_classes != 2) {
        return Err(Error::contract(format!(
            "{kind} is a two-input binary classifier, got {input_size} inputs and {num_classes} classes"
        )));
    }
    if kind.is_text() && (input_size == 0 || num_classes < 2) {
        return Err(Error::contract(format!(
            "{kind} needs inputs and at least two classes, got {input_size} and {num_classes}"
        )));
    }
    let (layers, loss) = match kind {
        ArchKind::SimpleDropout => (
            vec![
                Layer::dense(2, 4),
                Layer::Activation(Sigmoid),
                dropout_layer(),
                Layer::dense(4, 1),
                Layer::Activation(Sigmoid),
            ],
            LossKind::Bce,
        ),
        ArchKind::TinyCnn => (
            vec![
                Layer::conv1d(1, 2),
                Layer::Activation(Sigmoid),
                Layer::dense(1, 1),
                Layer::Activation(Sigmoid),
            ],
            LossKind::Bce,
        ),
        ArchKind::TinyRnn => (
            vec![
                Layer::recurrent(1, 2, 2),
                Layer::dense(2, 1),
                Layer::Activation(Sigmoid),
            ],
            LossKind::Bce,
        ),
        ArchKind::ComplexNn => (
            vec![
                Layer::complex_dense(2, 2, true),
                Layer::Activation(Relu),
                Layer::complex_dense(2, 1, false),
                Layer::Magnitude,
            ],
            LossKind::Mse,
        ),
        ArchKind::TextFfn => {
            let [h1, h2] = TEXT_FFN_HIDDEN;
            let mut layers = vec![Layer::dense(input_size, h1), Layer::Activation(Relu)];
            if dropout {
                layers.push(dropout_layer());
            }
            layers.extend([Layer::dense(h1, h2), Layer::Activation(Relu)]);
            if dropout {
                layers.push(dropout_layer());
            }
            layers.push(Layer::dense(h2, num_classes));
            (layers, LossKind::CrossEntropy)
        }
        ArchKind::TextRnn => {
            if input_size % TEXT_RNN_STEPS != 0 {
                return Err(Error::contract(format!(
                    "recurrent text model needs a width divisible by {TEXT_RNN_STEPS}, got {input_size}"
                )));
            }
            let mut layers = vec![Layer::recurrent(
                input_size / TEXT_RNN_STEPS,
                TEXT_RNN_STEPS,
                TEXT_RNN_HIDDEN,
            )];
            if dropout {
                layers.push(dropout_layer());
            }
            layers.push(Layer::dense(TEXT_RNN_HIDDEN, num_classes));
            (layers, LossKind::CrossEntropy)
        }
    };
    Ok(Network::new(input_size, layers, loss)?.initialized(seed))
}

/// Smallest width the recurrent text model accepts that holds `width` features.
pub fn text_rnn_width(width: usize) -> usize {
    width.div_ceil(TEXT_RNN_STEPS).max(1) * TEXT_RNN_STEPS
}

/// Training setup for the gate comparison: lr 0.2, 10 epochs, SGD with BCE,
/// except the complex net which uses Adam with MSE.
pub fn make_comparison_config(kind: ArchKind) -> Result<TrainConfig> {
    if kind.is_text() {
        return Err(Error::contract(format!(
            "{kind} is not a gate architecture"
        )));
    }
    let (optimizer, loss) = match kind {
        ArchKind::ComplexNn => (OptimizerKind::adam(), LossKind::Mse),
        _ => (OptimizerKind::Sgd, LossKind::Bce),
    };
    Ok(TrainConfig {
        lr: 0.2,
        epochs: 10,
        optimizer,
        loss,
        step_mode: StepMode::RouteLocal,
        routing: RoutingPolicy::BitConsume,
        batch_size: 1,
        seed: 1,
        shuffle: false,
    })
}

/// Balanced trie of `depth` levels whose every node is `make_network(spec, node_seed)`.
pub fn embed_in_trie(spec: &ArchSpec, depth: usize, seed: u64) -> Result<Trie> {
    if depth == 0 {
        return Err(Error::contract(
            "an embedded architecture needs depth at least 1",
        ));
    }
    make_network(spec, 0)?;
    Ok(Trie::build_with(depth, seed, |s| {
        make_network(spec, s).expect("spec validated above")
    }))
}
