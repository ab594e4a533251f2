//! A small from-scratch neural-network engine: layers, losses, optimizers and
//! hand-derived backward passes, in f64 throughout.

mod gradcheck;
mod layer;
mod loss;
mod network;
mod optim;

pub use gradcheck::{finite_diff_gradients, relative_error};
pub use layer::{
    sigmoid, Activation, ComplexDense, Conv1d, Dense, Layer, LayerCache, ParamsMut, Recurrent,
};
pub use loss::{loss_gradient, loss_value, softmax, LossKind, BCE_CLAMP};
pub use network::{ForwardCache, GradBlock, Gradients, Mode, Network};
pub use optim::{AdamState, OptimizerKind, OptimizerState};
