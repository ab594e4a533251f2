//! Artifact encoding and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tann::train::EpochRecord;

use crate::experiment::Experiment;

pub const TRACE_HEADER: &str = "epoch,mean_loss,last_loss";
pub const METRICS_HEADER: &str = "model,config,depth,final_loss,accuracy,weighted_f1";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FAILURES_FILE: &str = "failures.json";

/// One output file held in memory until the run completes.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Serialize)]
struct TraceRow {
    epoch: usize,
    mean_loss: f64,
    last_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub config: String,
    pub depth: usize,
    pub final_loss: f64,
    pub accuracy: f64,
    pub weighted_f1: f64,
}

fn encode<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &str) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().context("flushing CSV buffer")
}

pub fn trace_csv(records: &[EpochRecord]) -> Result<Vec<u8>> {
    encode(
        records.iter().map(|r| TraceRow {
            epoch: r.epoch,
            mean_loss: r.mean_loss,
            last_loss: r.last_loss,
        }),
        TRACE_HEADER,
    )
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    encode(rows, METRICS_HEADER)
}

/// `(epoch, mean_loss)` pairs of a trace CSV, checking its header.
pub fn read_trace(bytes: &[u8]) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(
        header.join(",") == TRACE_HEADER,
        "expected trace header `{TRACE_HEADER}`, found `{}`",
        header.join(",")
    );
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((rec[0].parse()?, rec[1].parse()?))
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
    Ok(target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to rerun an experiment, plus digests of what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub experiment: Experiment,
    pub outputs: Vec<OutputEntry>,
}

impl Manifest {
    pub fn new(experiment: Experiment, artifacts: &[Artifact]) -> Manifest {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment,
            outputs: artifacts
                .iter()
                .map(|a| OutputEntry {
                    file: a.name.clone(),
                    sha256: sha256_hex(&a.bytes),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
