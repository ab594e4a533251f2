//! Turns flags, config-file sections and presets into resolved experiments.

use std::path::Path;

use tann::baselines::{make_comparison_config, make_network, ArchKind, ArchSpec};
use tann::data::Weighting;
use tann::nn::OptimizerKind;
use tann::train::StepMode;
use tann::trie::{RoutingPolicy, DEFAULT_THRESHOLD};

use crate::args::*;
use crate::experiment::*;
use crate::UsageError;

type Resolved<T> = Result<T, UsageError>;

fn usage<T>(msg: impl Into<String>) -> Resolved<T> {
    Err(UsageError(msg.into()))
}

fn optimizer(arg: OptimizerArg) -> OptimizerKind {
    match arg {
        OptimizerArg::Sgd => OptimizerKind::Sgd,
        OptimizerArg::Adam => OptimizerKind::adam(),
    }
}

fn routing(arg: RoutingArg, threshold: Option<f64>) -> RoutingPolicy {
    match arg {
        RoutingArg::Bits => RoutingPolicy::BitConsume,
        RoutingArg::Threshold => RoutingPolicy::FeatureThreshold {
            threshold: threshold.unwrap_or(DEFAULT_THRESHOLD),
        },
    }
}

/// Applies set fields of `args` on top of `preset` and validates the result.
fn settings(args: &TrainArgs, preset: TrainSettings) -> Resolved<TrainSettings> {
    let s = TrainSettings {
        lr: args.lr.unwrap_or(preset.lr),
        epochs: args.epochs.unwrap_or(preset.epochs),
        optimizer: args.optimizer.map_or(preset.optimizer, optimizer),
        step_mode: args.step_mode.map_or(preset.step_mode, |m| match m {
            StepModeArg::RouteLocal => StepMode::RouteLocal,
            StepModeArg::Global => StepMode::GlobalStep,
        }),
        routing: match (args.routing, args.threshold) {
            (Some(r), t) => routing(r, t),
            (None, Some(t)) => match preset.routing {
                RoutingPolicy::FeatureThreshold { .. } => {
                    RoutingPolicy::FeatureThreshold { threshold: t }
                }
                bits => bits,
            },
            (None, None) => preset.routing,
        },
        batch_size: args.batch_size.unwrap_or(preset.batch_size),
        shuffle: args.shuffle.unwrap_or(preset.shuffle),
    };
    if s.epochs == 0 {
        return usage("--epochs must be at least 1");
    }
    if !(s.lr > 0.0 && s.lr.is_finite()) {
        return usage(format!("--lr must be positive, got {}", s.lr));
    }
    if s.batch_size == 0 {
        return usage("--batch-size must be at least 1");
    }
    Ok(s)
}

fn seeds(args: &TrainArgs, preset: &[u64]) -> Resolved<Vec<u64>> {
    let seeds = args.seeds.clone().unwrap_or_else(|| preset.to_vec());
    if seeds.is_empty() {
        return usage("seed list is empty");
    }
    Ok(seeds)
}

fn single_seed(args: &TrainArgs, preset: u64) -> Resolved<u64> {
    match args.seeds.as_deref() {
        None => Ok(preset),
        Some([s]) => Ok(*s),
        Some(_) => usage("this command takes a single --seed"),
    }
}

fn positive(name: &str, v: usize) -> Resolved<usize> {
    if v == 0 {
        return usage(format!("--{name} must be at least 1"));
    }
    Ok(v)
}

/// Sorted, duplicate-free depths; duplicates produce a warning.
fn depth_list(depths: Vec<usize>, warnings: &mut Vec<String>) -> Resolved<Vec<usize>> {
    if depths.is_empty() {
        return usage("depth list is empty");
    }
    let mut seen = Vec::new();
    for d in depths {
        positive("depth", d)?;
        if seen.contains(&d) {
            warnings.push(format!("depth {d} listed more than once; running it once"));
        } else {
            seen.push(d);
        }
    }
    Ok(seen)
}

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub fn gate_preset() -> TrainSettings {
    TrainSettings {
        lr: 0.01,
        epochs: 10,
        optimizer: OptimizerKind::adam(),
        step_mode: StepMode::RouteLocal,
        routing: RoutingPolicy::BitConsume,
        batch_size: 1,
        shuffle: false,
    }
}

pub fn text_preset() -> TrainSettings {
    TrainSettings {
        lr: 0.001,
        epochs: 10,
        optimizer: OptimizerKind::adam(),
        step_mode: StepMode::RouteLocal,
        routing: RoutingPolicy::threshold(),
        batch_size: 16,
        shuffle: true,
    }
}

pub fn gate(args: &GateArgs, file: &ConfigFile) -> Resolved<Experiment> {
    let train = args.train.clone().or(file.train.clone());
    Ok(Experiment::Gate(GateExperiment {
        gate: args.gate,
        depth: positive("depth", args.opts.depth.or(file.gate.depth).unwrap_or(3))?,
        hidden: positive(
            "hidden",
            args.opts.hidden.or(file.gate.hidden).unwrap_or(20),
        )?,
        seeds: seeds(&train, &DEFAULT_SEEDS)?,
        train: settings(&train, gate_preset())?,
        check: args.opts.check || file.gate.check,
    }))
}

pub fn depth_sweep(
    args: &SweepArgs,
    file: &ConfigFile,
    warnings: &mut Vec<String>,
) -> Resolved<Experiment> {
    let train = args.train.clone().or(file.train.clone());
    let depths = args
        .opts
        .depths
        .clone()
        .or_else(|| file.depth_sweep.depths.clone())
        .unwrap_or_else(|| (1..=5).collect());
    Ok(Experiment::DepthSweep(SweepExperiment {
        gate: args.gate,
        depths: depth_list(depths, warnings)?,
        hidden: positive(
            "hidden",
            args.opts.hidden.or(file.depth_sweep.hidden).unwrap_or(20),
        )?,
        seeds: seeds(&train, &DEFAULT_SEEDS)?,
        train: settings(
            &train,
            TrainSettings {
                epochs: 200,
                ..gate_preset()
            },
        )?,
        check: args.opts.check || file.depth_sweep.check,
    }))
}

pub fn compare(args: &CompareArgs, file: &ConfigFile) -> Resolved<Experiment> {
    let train = args.train.clone().or(file.train.clone());
    let arch = args
        .opts
        .arch
        .clone()
        .or_else(|| file.compare.arch.clone())
        .unwrap_or("all".into());
    let kinds: Vec<ArchKind> = if arch.eq_ignore_ascii_case("all") {
        ArchKind::GATE_KINDS.to_vec()
    } else {
        match arch.parse::<ArchKind>() {
            Ok(k) if !k.is_text() => vec![k],
            _ => return usage(format!(
                "unknown architecture `{arch}`; expected all, simple-dropout, cnn, rnn or complex"
            )),
        }
    };
    let depth = positive("depth", args.opts.depth.or(file.compare.depth).unwrap_or(3))?;
    let seed = single_seed(&train, 1)?;
    let mut runs = Vec::new();
    for kind in kinds {
        let preset = make_comparison_config(kind).map_err(|e| UsageError(e.to_string()))?;
        let s = settings(
            &train,
            TrainSettings {
                lr: preset.lr,
                epochs: preset.epochs,
                optimizer: preset.optimizer,
                step_mode: preset.step_mode,
                routing: preset.routing,
                batch_size: preset.batch_size,
                shuffle: preset.shuffle,
            },
        )?;
        let net = make_network(&ArchSpec::gate(kind), 0).map_err(|e| UsageError(e.to_string()))?;
        for variant in [Variant::Standalone, Variant::Tann] {
            runs.push(CompareRun {
                arch: kind,
                variant,
                dropout: dropout_rate(&net),
                train: s.config(preset.loss, seed),
            });
        }
    }
    Ok(Experiment::Compare(CompareExperiment {
        gate: args
            .opts
            .gate
            .or(file.compare.gate)
            .unwrap_or(tann::data::Gate::Xor),
        depth,
        runs,
    }))
}

/// Corpus I/O problems surface as runtime errors rather than usage errors.
pub fn text(
    args: &TextArgs,
    file: &ConfigFile,
    warnings: &mut Vec<String>,
) -> anyhow::Result<Experiment> {
    let train = args.train.clone().or(file.train.clone());
    let o = &args.opts;
    let f = &file.text;
    let Some(data) = o.data.clone().or_else(|| f.data.clone()) else {
        return Err(UsageError("--data is required".into()).into());
    };
    let format = match o.format.or(f.format) {
        Some(FormatArg::Dir) => CorpusFormat::Dir,
        Some(FormatArg::Lines) => CorpusFormat::Lines,
        None if data.is_dir() => CorpusFormat::Dir,
        None => CorpusFormat::Lines,
    };
    let data = absolute(&data);
    let corpus_sha256 = corpus_digest(&data, format)?;
    let train_fraction = o.train_fraction.or(f.train_fraction).unwrap_or(0.8);
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(UsageError(format!(
            "--train-fraction must lie in (0, 1), got {train_fraction}"
        ))
        .into());
    }
    let depths = o
        .depths
        .clone()
        .or_else(|| f.depths.clone())
        .unwrap_or_else(|| vec![1]);
    Ok(Experiment::Text(TextExperiment {
        data,
        format,
        corpus_sha256,
        model: o.model.or(f.model).unwrap_or(ModelArg::Ffn).into(),
        dropout: o.dropout || f.dropout,
        depths: depth_list(depths, warnings)?,
        seed: single_seed(&train, 1)?,
        train_fraction,
        max_features: positive(
            "max-features",
            o.max_features.or(f.max_features).unwrap_or(2000),
        )?,
        weighting: o
            .weighting
            .or(f.weighting)
            .map_or(Weighting::TfIdf, Into::into),
        train: settings(&train, text_preset())?,
        min_accuracy: o.min_accuracy.or(f.min_accuracy),
        dump_dataset: o.dump_dataset || f.dump_dataset,
    }))
}

fn absolute(p: &Path) -> std::path::PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}
