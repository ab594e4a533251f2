//! The `tann` experiment harness.
//!
//! Each experiment command resolves its configuration (flags over the
//! `--config` file over built-in presets), runs independent trainings in
//! parallel, and writes trace CSVs, a metrics table, an SVG plot and a
//! `manifest.toml` into the output directory. `tann replay` reruns a manifest
//! and checks that every output is reproduced byte for byte.
//!
//! Exit codes: 0 on success, 1 when a run errors or a declared check fails
//! (a `failures.json` list is written), 2 on usage errors.

pub mod args;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod resolve;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;
use tann::nn::Network;
use tann::trie::{CostModel, Trie};

use args::{Cli, Command, ConfigFile};
use experiment::{Experiment, Failure, RunOutput};
use output::{read_trace, write_atomic, Artifact, Manifest, FAILURES_FILE, MANIFEST_FILE};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Deepest trie `tann cost` will build.
pub const MAX_COST_DEPTH: usize = 20;

/// Invalid invocation; reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<UsageError>() {
                eprintln!("error: {u}");
                EXIT_USAGE
            } else {
                let failures = [Failure {
                    check: "run".into(),
                    message: format!("{e:#}"),
                }];
                eprintln!("{}", serde_json::to_string(&failures).unwrap_or_default());
                EXIT_FAILED
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

pub fn run(cli: Cli) -> Result<u8> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| dispatch(cli))
}

fn out_dir(cli_out: &Option<PathBuf>, command: &str) -> PathBuf {
    cli_out
        .clone()
        .unwrap_or_else(|| Path::new("tann-out").join(command))
}

fn dispatch(cli: Cli) -> Result<u8> {
    let file = load_config(cli.config.as_deref())?;
    let mut warnings = Vec::new();
    let experiment = match &cli.command {
        Command::Gate(a) => resolve::gate(a, &file)?,
        Command::DepthSweep(a) => resolve::depth_sweep(a, &file, &mut warnings)?,
        Command::Compare(a) => resolve::compare(a, &file)?,
        Command::Text(a) => resolve::text(a, &file, &mut warnings)?,
        Command::Cost(a) => return cost(a),
        Command::Plot(a) => return plot(a),
        Command::Replay(a) => return replay(&a.manifest, cli.out.as_deref()),
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let dir = out_dir(&cli.out, experiment.name());
    let output = experiment.run()?;
    finish(&dir, &experiment, output, Vec::new())
}

/// Writes artifacts, manifest and any failure list; returns the exit code.
fn finish(
    dir: &Path,
    experiment: &Experiment,
    output: RunOutput,
    mut extra: Vec<Failure>,
) -> Result<u8> {
    let RunOutput {
        artifacts,
        mut failures,
        report,
    } = output;
    for a in &artifacts {
        write_atomic(dir, &a.name, &a.bytes)?;
    }
    let manifest = Manifest::new(experiment.clone(), &artifacts);
    write_atomic(dir, MANIFEST_FILE, manifest.to_toml()?.as_bytes())?;
    for line in &report {
        println!("{line}");
    }
    println!("wrote {} files to {}", artifacts.len() + 1, dir.display());
    failures.append(&mut extra);
    let failures_path = dir.join(FAILURES_FILE);
    if failures.is_empty() {
        if failures_path.exists() {
            fs::remove_file(&failures_path)?;
        }
        Ok(EXIT_OK)
    } else {
        let json = serde_json::to_string_pretty(&failures)?;
        write_atomic(dir, FAILURES_FILE, json.as_bytes())?;
        println!("{json}");
        Ok(EXIT_FAILED)
    }
}

fn replay(manifest_path: &Path, out: Option<&Path>) -> Result<u8> {
    let recorded = Manifest::load(manifest_path)?;
    if recorded.tool_version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, replaying with {}",
            recorded.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .join("replay"),
    };
    let output = recorded.experiment.run()?;
    let mismatches = compare_outputs(&recorded, &output.artifacts);
    if mismatches.is_empty() {
        println!("replay reproduced {} outputs", recorded.outputs.len());
    }
    finish(&dir, &recorded.experiment, output, mismatches)
}

fn compare_outputs(recorded: &Manifest, produced: &[Artifact]) -> Vec<Failure> {
    let mut failures = Vec::new();
    for entry in &recorded.outputs {
        match produced.iter().find(|a| a.name == entry.file) {
            None => failures.push(Failure {
                check: "replay".into(),
                message: format!("{} was not produced", entry.file),
            }),
            Some(a) if output::sha256_hex(&a.bytes) != entry.sha256 => failures.push(Failure {
                check: "replay".into(),
                message: format!("{} differs from the recorded output", entry.file),
            }),
            Some(_) => {}
        }
    }
    for a in produced {
        if !recorded.outputs.iter().any(|e| e.file == a.name) {
            failures.push(Failure {
                check: "replay".into(),
                message: format!("{} was not recorded", a.name),
            });
        }
    }
    failures
}

fn cost(a: &args::CostArgs) -> Result<u8> {
    if a.depth == 0 || a.depth > MAX_COST_DEPTH {
        return Err(UsageError(format!("--depth must lie in 1..={MAX_COST_DEPTH}")).into());
    }
    if a.neurons <= 0
        || a.layers <= 0
        || !(a.per_neuron_cost > 0.0 && a.per_neuron_cost.is_finite())
    {
        return Err(UsageError(
            "--neurons, --layers and --per-neuron-cost must be positive".into(),
        )
        .into());
    }
    let model = CostModel::new(a.neurons as usize, a.layers as usize, a.per_neuron_cost)?;
    let trie = Trie::build_with(a.depth, 0, |_| Network::mini_nn(1, 1));
    let est = trie.estimate_cost(&model);
    println!("t_node = {}", est.t_node);
    println!("per_inference = {}", est.per_inference);
    Ok(EXIT_OK)
}

fn plot(a: &args::PlotArgs) -> Result<u8> {
    let mut series = Vec::new();
    for path in &a.traces {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let points = read_trace(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        if points.is_empty() {
            return Err(UsageError(format!("{} has no rows", path.display())).into());
        }
        let label = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        series.push(plot::Series { label, points });
    }
    let svg = plot::render_svg(&a.title, &series)?;
    let dir = a
        .output
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = a
        .output
        .file_name()
        .ok_or_else(|| UsageError("--output must name a file".into()))?
        .to_string_lossy()
        .into_owned();
    write_atomic(dir, &name, svg.as_bytes())?;
    println!("wrote {}", a.output.display());
    Ok(EXIT_OK)
}
