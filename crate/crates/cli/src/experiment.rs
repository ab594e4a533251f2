//! Fully resolved experiments and their execution.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tann::baselines::{embed_in_trie, make_network, text_rnn_width, ArchKind, ArchSpec};
use tann::data::{
    build_vocab, gate_dataset, load_dir_per_class, load_labeled_lines, train_test_split, vectorize,
    Gate, VectorizerConfig, Weighting,
};
use tann::nn::{Layer, LossKind, Network, OptimizerKind};
use tann::train::{
    evaluate, train_single, train_tann, train_tann_batched, StepMode, TrainConfig, TrainReport,
};
use tann::trie::{build_trie, FeatureAssignment, RoutingPolicy, Trie};

use crate::output::{metrics_csv, sha256_hex, trace_csv, Artifact, MetricsRow};
use crate::plot::{render_svg, Series};

/// Training hyperparameters shared by every run of an experiment; the loss
/// follows the model and the seed follows the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub lr: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub step_mode: StepMode,
    pub routing: RoutingPolicy,
    pub batch_size: usize,
    pub shuffle: bool,
}

impl TrainSettings {
    pub fn config(&self, loss: LossKind, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            optimizer: self.optimizer,
            loss,
            step_mode: self.step_mode,
            routing: self.routing,
            batch_size: self.batch_size,
            seed,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateExperiment {
    pub gate: Gate,
    pub depth: usize,
    pub hidden: usize,
    pub seeds: Vec<u64>,
    pub train: TrainSettings,
    /// Require the median final loss of the trie to beat the single network.
    pub check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepExperiment {
    pub gate: Gate,
    pub depths: Vec<usize>,
    pub hidden: usize,
    pub seeds: Vec<u64>,
    pub train: TrainSettings,
    /// Require every run to classify all four patterns.
    pub check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Standalone,
    Tann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRun {
    pub arch: ArchKind,
    pub variant: Variant,
    /// Dropout rate present in the network, 0 when it has none.
    pub dropout: f64,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareExperiment {
    pub gate: Gate,
    pub depth: usize,
    pub runs: Vec<CompareRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Lines,
    Dir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextExperiment {
    pub data: PathBuf,
    pub format: CorpusFormat,
    /// Digest of the corpus contents when the experiment was resolved.
    pub corpus_sha256: String,
    pub model: ArchKind,
    pub dropout: bool,
    pub depths: Vec<usize>,
    pub seed: u64,
    pub train_fraction: f64,
    pub max_features: usize,
    pub weighting: Weighting,
    pub train: TrainSettings,
    pub min_accuracy: Option<f64>,
    pub dump_dataset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Experiment {
    Gate(GateExperiment),
    DepthSweep(SweepExperiment),
    Compare(CompareExperiment),
    Text(TextExperiment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub check: String,
    pub message: String,
}

/// Files produced by a run, the declared checks that failed, and a short
/// human-readable report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<Failure>,
    pub report: Vec<String>,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Gate(_) => "gate",
            Experiment::DepthSweep(_) => "depth-sweep",
            Experiment::Compare(_) => "compare",
            Experiment::Text(_) => "text",
        }
    }

    pub fn run(&self) -> Result<RunOutput> {
        match self {
            Experiment::Gate(e) => run_gate(e),
            Experiment::DepthSweep(e) => run_sweep(e),
            Experiment::Compare(e) => run_compare(e),
            Experiment::Text(e) => run_text(e),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// Threshold routing reads one feature per node; give every node one.
fn prepare(mut trie: Trie, routing: &RoutingPolicy, width: usize) -> Result<Trie> {
    if matches!(routing, RoutingPolicy::FeatureThreshold { .. }) {
        trie.assign_feature_indices(&FeatureAssignment::DepthCycling { input_dim: width })?;
    }
    Ok(trie)
}

fn trace_series(label: String, report: &[tann::train::EpochRecord]) -> Series {
    Series {
        label,
        points: report
            .iter()
            .map(|r| (r.epoch as f64, r.mean_loss))
            .collect(),
    }
}

fn csv_artifact(name: String, bytes: Vec<u8>) -> Artifact {
    Artifact { name, bytes }
}

fn run_gate(e: &GateExperiment) -> Result<RunOutput> {
    let ds = gate_dataset(e.gate);
    let runs: Vec<(TrainReport<Trie>, TrainReport<Network>)> = e
        .seeds
        .par_iter()
        .map(|&seed| -> Result<_> {
            let cfg = e.train.config(LossKind::Bce, seed);
            let trie = prepare(build_trie(2, e.hidden, e.depth, seed), &cfg.routing, 2)?;
            let tann = train_tann(trie, &ds, &cfg)?;
            let single = train_single(Network::mini_nn(2, e.hidden).initialized(seed), &ds, &cfg)?;
            Ok((tann, single))
        })
        .collect::<Result<_>>()?;

    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    let (mut tann_losses, mut single_losses) = (Vec::new(), Vec::new());
    for (&seed, (tann, single)) in e.seeds.iter().zip(&runs) {
        let mt = evaluate(&tann.model, &ds, &e.train.routing, 0.5)?;
        let ms = evaluate(&single.model, &ds, &e.train.routing, 0.5)?;
        artifacts.push(csv_artifact(
            format!("tann_seed{seed}.csv"),
            trace_csv(&tann.epochs)?,
        ));
        artifacts.push(csv_artifact(
            format!("single_seed{seed}.csv"),
            trace_csv(&single.epochs)?,
        ));
        series.push(trace_series(format!("tann seed {seed}"), &tann.epochs));
        series.push(trace_series(format!("single seed {seed}"), &single.epochs));
        tann_losses.push(tann.final_mean_loss());
        single_losses.push(single.final_mean_loss());
        for (model, depth, loss, m) in [
            ("tann", e.depth, tann.final_mean_loss(), &mt),
            ("single", 0, single.final_mean_loss(), &ms),
        ] {
            rows.push(MetricsRow {
                model: model.into(),
                config: format!("{} seed={seed}", e.gate),
                depth,
                final_loss: loss,
                accuracy: m.accuracy,
                weighted_f1: m.weighted_f1,
            });
        }
    }
    let (mt, ms) = (median(&tann_losses), median(&single_losses));
    let median_row = |model: &str, depth: usize, final_loss: f64| {
        let per_seed: Vec<&MetricsRow> = rows.iter().filter(|r| r.model == model).collect();
        let acc: Vec<f64> = per_seed.iter().map(|r| r.accuracy).collect();
        let f1: Vec<f64> = per_seed.iter().map(|r| r.weighted_f1).collect();
        MetricsRow {
            model: model.into(),
            config: format!("{} median seeds={}", e.gate, join(&e.seeds)),
            depth,
            final_loss,
            accuracy: median(&acc),
            weighted_f1: median(&f1),
        }
    };
    let medians = [median_row("tann", e.depth, mt), median_row("single", 0, ms)];
    rows.extend(medians);
    artifacts.push(csv_artifact("summary.csv".into(), metrics_csv(&rows)?));
    artifacts.push(csv_artifact(
        "loss.svg".into(),
        render_svg(&format!("{} training loss", e.gate), &series)?.into_bytes(),
    ));

    let mut failures = Vec::new();
    if e.check && mt >= ms {
        failures.push(Failure {
            check: "tann_median_below_single".into(),
            message: format!("median final loss: tann {mt} vs single {ms}"),
        });
    }
    Ok(RunOutput {
        artifacts,
        failures,
        report: vec![format!(
            "{} depth {}: median final loss tann {mt:.6} single {ms:.6}",
            e.gate, e.depth
        )],
    })
}

fn run_sweep(e: &SweepExperiment) -> Result<RunOutput> {
    let ds = gate_dataset(e.gate);
    let jobs: Vec<(usize, u64)> = e
        .depths
        .iter()
        .flat_map(|&d| e.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let runs: Vec<(TrainReport<Trie>, f64, f64)> = jobs
        .par_iter()
        .map(|&(depth, seed)| -> Result<_> {
            let cfg = e.train.config(LossKind::Bce, seed);
            let trie = prepare(build_trie(2, e.hidden, depth, seed), &cfg.routing, 2)?;
            let report = train_tann(trie, &ds, &cfg)?;
            let m = evaluate(&report.model, &ds, &cfg.routing, 0.5)?;
            Ok((report, m.accuracy, m.weighted_f1))
        })
        .collect::<Result<_>>()?;

    let mut artifacts = Vec::new();
    let mut run_rows = Vec::new();
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for (&(depth, seed), (report, acc, f1)) in jobs.iter().zip(&runs) {
        artifacts.push(csv_artifact(
            format!("tann_d{depth}_seed{seed}.csv"),
            trace_csv(&report.epochs)?,
        ));
        if seed == e.seeds[0] {
            series.push(trace_series(
                format!("depth {depth} seed {seed}"),
                &report.epochs,
            ));
        }
        run_rows.push(MetricsRow {
            model: "tann".into(),
            config: format!("{} seed={seed}", e.gate),
            depth,
            final_loss: report.final_mean_loss(),
            accuracy: *acc,
            weighted_f1: *f1,
        });
        if e.check && *acc < 1.0 {
            failures.push(Failure {
                check: "all_patterns_learned".into(),
                message: format!("depth {depth} seed {seed}: accuracy {acc}"),
            });
        }
    }
    let mut report = Vec::new();
    let summary: Vec<MetricsRow> = e
        .depths
        .iter()
        .map(|&d| {
            let rows: Vec<&MetricsRow> = run_rows.iter().filter(|r| r.depth == d).collect();
            let losses: Vec<f64> = rows.iter().map(|r| r.final_loss).collect();
            let min =
                |f: fn(&MetricsRow) -> f64| rows.iter().map(|r| f(r)).fold(f64::INFINITY, f64::min);
            let row = MetricsRow {
                model: "tann".into(),
                config: format!(
                    "{} median loss, min scores, seeds={}",
                    e.gate,
                    join(&e.seeds)
                ),
                depth: d,
                final_loss: median(&losses),
                accuracy: min(|r| r.accuracy),
                weighted_f1: min(|r| r.weighted_f1),
            };
            report.push(format!(
                "{} depth {d}: median final loss {:.6}, min accuracy {}",
                e.gate, row.final_loss, row.accuracy
            ));
            row
        })
        .collect();
    artifacts.push(csv_artifact("runs.csv".into(), metrics_csv(&run_rows)?));
    artifacts.push(csv_artifact("summary.csv".into(), metrics_csv(&summary)?));
    artifacts.push(csv_artifact(
        "loss.svg".into(),
        render_svg(&format!("{} loss by depth", e.gate), &series)?.into_bytes(),
    ));
    Ok(RunOutput {
        artifacts,
        failures,
        report,
    })
}

pub fn dropout_rate(net: &Network) -> f64 {
    net.layers()
        .iter()
        .find_map(|l| match l {
            Layer::Dropout { p } => Some(*p),
            _ => None,
        })
        .unwrap_or(0.0)
}

fn config_label(run: &CompareRun) -> String {
    format!(
        "{} opt={} loss={} lr={} epochs={} dropout={}",
        match run.variant {
            Variant::Standalone => "standalone",
            Variant::Tann => "tann",
        },
        run.train.optimizer.name(),
        run.train.loss.as_str(),
        run.train.lr,
        run.train.epochs,
        run.dropout
    )
}

fn run_compare(e: &CompareExperiment) -> Result<RunOutput> {
    let ds = gate_dataset(e.gate);
    let results: Vec<(Vec<tann::train::EpochRecord>, f64, f64)> = e
        .runs
        .par_iter()
        .map(|run| -> Result<_> {
            let spec = ArchSpec::gate(run.arch);
            let cfg = &run.train;
            match run.variant {
                Variant::Standalone => {
                    let r = train_single(make_network(&spec, cfg.seed)?, &ds, cfg)?;
                    let m = evaluate(&r.model, &ds, &cfg.routing, 0.5)?;
                    Ok((r.epochs, m.accuracy, m.weighted_f1))
                }
                Variant::Tann => {
                    let trie = prepare(embed_in_trie(&spec, e.depth, cfg.seed)?, &cfg.routing, 2)?;
                    let r = train_tann(trie, &ds, cfg)?;
                    let m = evaluate(&r.model, &ds, &cfg.routing, 0.5)?;
                    Ok((r.epochs, m.accuracy, m.weighted_f1))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    let mut report = Vec::new();
    for (run, (epochs, acc, f1)) in e.runs.iter().zip(&results) {
        let tag = match run.variant {
            Variant::Standalone => "standalone",
            Variant::Tann => "tann",
        };
        let final_loss = epochs.last().map_or(f64::NAN, |r| r.mean_loss);
        artifacts.push(csv_artifact(
            format!("{}_{tag}.csv", run.arch),
            trace_csv(epochs)?,
        ));
        series.push(trace_series(format!("{} {tag}", run.arch), epochs));
        rows.push(MetricsRow {
            model: run.arch.to_string(),
            config: config_label(run),
            depth: if run.variant == Variant::Tann {
                e.depth
            } else {
                0
            },
            final_loss,
            accuracy: *acc,
            weighted_f1: *f1,
        });
        report.push(format!(
            "{} {tag}: final loss {final_loss:.6}, accuracy {acc}",
            run.arch
        ));
    }
    artifacts.push(csv_artifact("summary.csv".into(), metrics_csv(&rows)?));
    artifacts.push(csv_artifact(
        "loss.svg".into(),
        render_svg(&format!("{} architecture comparison", e.gate), &series)?.into_bytes(),
    ));
    Ok(RunOutput {
        artifacts,
        failures: Vec::new(),
        report,
    })
}

/// Digest of a corpus file, or of every file under a corpus directory keyed by
/// relative path.
pub fn corpus_digest(path: &Path, format: CorpusFormat) -> Result<String> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<u8>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, acc)?;
            } else {
                let rel = p
                    .strip_prefix(root)
                    .unwrap_or(&p)
                    .to_string_lossy()
                    .into_owned();
                acc.extend(rel.as_bytes());
                acc.push(0);
                acc.extend(sha256_hex(&fs::read(&p)?).as_bytes());
                acc.push(b'\n');
            }
        }
        Ok(())
    }
    match format {
        CorpusFormat::Lines => {
            Ok(sha256_hex(&fs::read(path).with_context(|| {
                format!("reading corpus {}", path.display())
            })?))
        }
        CorpusFormat::Dir => {
            let mut acc = Vec::new();
            walk(path, path, &mut acc)?;
            Ok(sha256_hex(&acc))
        }
    }
}

fn run_text(e: &TextExperiment) -> Result<RunOutput> {
    let mut failures = Vec::new();
    let digest = corpus_digest(&e.data, e.format)?;
    if digest != e.corpus_sha256 {
        failures.push(Failure {
            check: "corpus_unchanged".into(),
            message: format!(
                "{} has digest {digest}, expected {}",
                e.data.display(),
                e.corpus_sha256
            ),
        });
    }
    let corpus = match e.format {
        CorpusFormat::Lines => load_labeled_lines(&e.data)?,
        CorpusFormat::Dir => load_dir_per_class(&e.data)?,
    };
    let mut report: Vec<String> = corpus
        .warnings
        .iter()
        .map(|w| format!("warning: {w}"))
        .collect();
    let vcfg = VectorizerConfig {
        max_features: e.max_features,
        weighting: e.weighting,
        lowercase: true,
    };
    let vocab = build_vocab(corpus.texts(), &vcfg)?;
    let mut ds = vectorize(&corpus, &vocab, &vcfg)?;
    if e.model == ArchKind::TextRnn {
        ds.pad_features(text_rnn_width(ds.feature_width()))?;
    }
    let (train, test) = train_test_split(&ds, e.train_fraction, e.seed)?;
    let width = ds.feature_width();
    let spec = ArchSpec::text(e.model, width, ds.num_classes(), e.dropout);
    let cfg = e.train.config(LossKind::CrossEntropy, e.seed);

    let runs: Vec<(TrainReport<Trie>, f64, f64)> = e
        .depths
        .par_iter()
        .map(|&depth| -> Result<_> {
            let trie = prepare(embed_in_trie(&spec, depth, e.seed)?, &cfg.routing, width)?;
            let r = train_tann_batched(trie, &train, &cfg)?;
            let m = evaluate(&r.model, &test, &cfg.routing, 0.5)?;
            Ok((r, m.accuracy, m.weighted_f1))
        })
        .collect::<Result<_>>()?;

    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (&depth, (r, acc, f1)) in e.depths.iter().zip(&runs) {
        artifacts.push(csv_artifact(
            format!("trace_d{depth}.csv"),
            trace_csv(&r.epochs)?,
        ));
        series.push(trace_series(format!("depth {depth}"), &r.epochs));
        rows.push(MetricsRow {
            model: format!("tann-{}", e.model),
            config: format!(
                "dropout={} lr={} epochs={} batch={} vocab={width} train={} test={}",
                e.dropout,
                cfg.lr,
                cfg.epochs,
                cfg.batch_size,
                train.len(),
                test.len()
            ),
            depth,
            final_loss: r.final_mean_loss(),
            accuracy: *acc,
            weighted_f1: *f1,
        });
        report.push(format!(
            "depth {depth}: held-out accuracy {acc:.4}, weighted F1 {f1:.4}"
        ));
        if let Some(min) = e.min_accuracy {
            if *acc < min {
                failures.push(Failure {
                    check: "min_accuracy".into(),
                    message: format!("depth {depth}: held-out accuracy {acc} below {min}"),
                });
            }
        }
    }
    artifacts.push(csv_artifact("metrics.csv".into(), metrics_csv(&rows)?));
    artifacts.push(csv_artifact(
        "loss.svg".into(),
        render_svg(&format!("{} training loss", e.model), &series)?.into_bytes(),
    ));
    if e.dump_dataset {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf)?;
        artifacts.push(csv_artifact("dataset.csv".into(), buf));
    }
    Ok(RunOutput {
        artifacts,
        failures,
        report,
    })
}
