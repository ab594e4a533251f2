//! Trie-augmented neural networks.
//!
//! A TANN is a binary trie whose every node owns a small neural network.
//! Inputs are routed from the root toward a leaf, either by reading the input
//! as bits or by thresholding one feature per node, and the network at the
//! terminal node produces the prediction. Each node network trains only on
//! the samples routed to it.
//!
//! The crate is organised as:
//!
//! - [`nn`]: dense/recurrent/convolutional/complex layers, losses, SGD and Adam.
//! - [`trie`]: the arena trie, routing policies, structural statistics, cost
//!   estimates and binary snapshots.
//! - [`train`]: online and batched training, inference and evaluation.
//! - [`baselines`]: the comparison architectures and text models.
//! - [`data`]: logic-gate datasets and a local text pipeline (TF/TF-IDF).
//! - [`metrics`]: confusion matrices, accuracy and weighted F1.

pub mod baselines;
pub mod data;
mod error;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod train;
pub mod trie;

pub use error::{Error, Result};
