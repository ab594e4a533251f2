//! Datasets: the logic-gate benchmarks and a local-file text pipeline.

mod text;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use text::{
    build_vocab, load_dir_per_class, load_labeled_lines, tokenize, vectorize, vectorize_text,
    RawCorpus, VectorizerConfig, Vocab, Weighting,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    num_classes: usize,
    feature_width: usize,
    class_names: Vec<String>,
}

impl Dataset {
    /// Class names default to the label indices.
    pub fn new(samples: Vec<Sample>, num_classes: usize) -> Result<Dataset> {
        let names = (0..num_classes).map(|c| c.to_string()).collect();
        Dataset::with_class_names(samples, names)
    }

    pub fn with_class_names(samples: Vec<Sample>, class_names: Vec<String>) -> Result<Dataset> {
        let num_classes = class_names.len();
        let feature_width = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_width {
                return Err(Error::contract(format!(
                    "sample {i} has width {}, expected {feature_width}",
                    s.features.len()
                )));
            }
            if s.label >= num_classes {
                return Err(Error::contract(format!(
                    "sample {i} has label {} but there are {num_classes} classes",
                    s.label
                )));
            }
        }
        Ok(Dataset {
            samples,
            num_classes,
            feature_width,
            class_names,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Zero-extends every feature vector to `width` (no-op when already that wide).
    pub fn pad_features(&mut self, width: usize) -> Result<()> {
        if width < self.feature_width {
            return Err(Error::contract(format!(
                "cannot pad width {} down to {width}",
                self.feature_width
            )));
        }
        for s in &mut self.samples {
            s.features.resize(width, 0.0);
        }
        self.feature_width = width;
        Ok(())
    }

    /// Debug dump with header `label,f0,f1,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("label".to_string())
            .chain((0..self.feature_width).map(|i| format!("f{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            write!(out, "{}", s.label)?;
            for v in &s.features {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
            feature_width: self.feature_width,
            class_names: self.class_names.clone(),
        }
    }
}

/// Deterministic shuffled split into `⌊n·ratio⌋` training and the remaining test samples.
pub fn train_test_split(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::contract(format!(
            "split ratio {ratio} must lie in (0, 1)"
        )));
    }
    let n = ds.len();
    let n_train = (n as f64 * ratio).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::contract(format!(
            "split of {n} samples at ratio {ratio} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((ds.subset(&idx[..n_train]), ds.subset(&idx[n_train..])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Xor,
    And,
    Or,
}

impl Gate {
    pub const ALL: [Gate; 3] = [Gate::Xor, Gate::And, Gate::Or];

    pub fn truth(self, a: bool, b: bool) -> bool {
        match self {
            Gate::Xor => a ^ b,
            Gate::And => a && b,
            Gate::Or => a || b,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::Xor => "xor",
            Gate::And => "and",
            Gate::Or => "or",
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Gate> {
        match s.to_ascii_lowercase().as_str() {
            "xor" => Ok(Gate::Xor),
            "and" => Ok(Gate::And),
            "or" => Ok(Gate::Or),
            other => Err(Error::contract(format!("unknown gate `{other}`"))),
        }
    }
}

/// The four input patterns in the order [0,0], [0,1], [1,0], [1,1].
pub fn gate_dataset(gate: Gate) -> Dataset {
    let samples = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        .into_iter()
        .map(|(a, b)| Sample {
            features: vec![a, b],
            label: gate.truth(a == 1.0, b == 1.0) as usize,
        })
        .collect();
    Dataset::new(samples, 2).expect("gate tables are well formed")
}
