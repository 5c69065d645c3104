mod commands;
mod spec;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use spec::{parse_assignment, parse_axis, ExperimentSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("cannot write {path}: {source}")]
    Unwritable { path: PathBuf, source: std::io::Error },
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: strata_core::Error },
    #[error("output check failed: {0}")]
    Output(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Output(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "strata", version, about = "Simulate two-layer resource discovery and report recall and cost")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a taxonomy and a profile set.
    GenDataset(GenArgs),
    /// Run one simulation per replication seed.
    Run(RunArgs),
    /// Run every combination of sweep-axis values for every seed.
    Sweep(SweepArgs),
    /// Summarize metrics files written by `run` or `sweep`.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    peers: Option<usize>,
    #[arg(long)]
    cycles: Option<u64>,
    /// Dataset generator.
    #[arg(long, value_parser = ["zipf", "planted"])]
    kind: Option<String>,
    #[arg(long)]
    labels: Option<usize>,
    /// Taxonomy branching range, e.g. `2,5`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    branching: Option<Vec<usize>>,
    #[arg(long)]
    zipf_s: Option<f64>,
    #[arg(long)]
    labels_per_peer: Option<usize>,
    /// Planted community count.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    ttl: Option<u32>,
    #[arg(long)]
    fanout: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    /// Any config field by dotted path, e.g. `--set election.tau_adopt=0.6`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, env = "STRATA_OUT", default_value = "strata-out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    /// Also resolve every query by flooding the whole overlay.
    Flood,
}

#[derive(Args)]
struct ExecArgs {
    /// Replication seeds; overrides the spec's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Run replications one at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Directory holding `taxonomy.txt` and `profiles.txt` from gen-dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Sweep axis, e.g. `--axis query.ttl=1,2,3`. Repeatable.
    #[arg(long, value_name = "PATH=V1,V2,..")]
    axis: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics files (`.jsonl`) or directories containing them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Print summary rows as JSON lines instead of a table.
    #[arg(long)]
    json: bool,
}

impl SpecArgs {
    fn load(&self, base_peers: Option<usize>) -> Result<ExperimentSpec, CliError> {
        let mut spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Spec(format!("cannot read {}: {e}", path.display())))?;
                ExperimentSpec::parse(&text)?
            }
            None => ExperimentSpec::empty(),
        };
        if let Some(n) = base_peers {
            if !spec.config.contains_key("n_peers") {
                spec.set("n_peers", toml::Value::Integer(n as i64))?;
            }
        }
        let int = |x: u64| toml::Value::Integer(x as i64);
        let flags: Vec<(&str, Option<toml::Value>)> = vec![
            ("seed", self.seed.map(int)),
            ("n_peers", self.peers.map(|x| int(x as u64))),
            ("cycles", self.cycles.map(int)),
            ("dataset.kind", self.kind.clone().map(toml::Value::String)),
            ("dataset.labels", self.labels.map(|x| int(x as u64))),
            (
                "dataset.branching",
                self.branching.as_ref().map(|b| toml::Value::Array(b.iter().map(|&x| int(x as u64)).collect())),
            ),
            ("dataset.zipf_exponent", self.zipf_s.map(toml::Value::Float)),
            ("dataset.labels_per_peer", self.labels_per_peer.map(|x| int(x as u64))),
            ("dataset.clusters", self.clusters.map(|x| int(x as u64))),
            ("workload.n_queries", self.queries.map(|x| int(x as u64))),
            ("workload.warmup", self.warmup.map(int)),
            ("query.k", self.k.map(|x| int(x as u64))),
            ("query.m", self.m.map(|x| int(x as u64))),
            ("query.ttl", self.ttl.map(|x| int(x as u64))),
            ("query.fanout", self.fanout.map(|x| int(x as u64))),
            ("query.theta", self.theta.map(toml::Value::Float)),
        ];
        for (path, v) in flags {
            if let Some(v) = v {
                spec.set(path, v)?;
            }
        }
        for o in &self.overrides {
            let (path, v) = parse_assignment(o)?;
            spec.set(&path, v)?;
        }
        Ok(spec)
    }
}

fn apply_exec(spec: &mut ExperimentSpec, exec: &ExecArgs) -> Result<(), CliError> {
    if !exec.seeds.is_empty() {
        spec.replications = Some(exec.seeds.clone());
    }
    if matches!(exec.baseline, Some(Baseline::Flood)) {
        spec.set("workload.flood_baseline", toml::Value::Boolean(true))?;
    }
    spec.check()
}

fn mode(sequential: bool) -> strata_core::Exec {
    if sequential {
        strata_core::Exec::Sequential
    } else {
        strata_core::Exec::Parallel
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenDataset(a) => {
            let spec = a.spec.load(Some(commands::GEN_DEFAULT_PEERS))?;
            commands::gen_dataset(&spec.resolve()?, &a.spec.out)
        }
        Command::Run(a) => {
            let mut spec = a.spec.load(None)?;
            apply_exec(&mut spec, &a.exec)?;
            commands::run(&spec, a.dataset.as_deref(), &a.spec.out, mode(a.exec.sequential))
        }
        Command::Sweep(a) => {
            let mut spec = a.spec.load(None)?;
            for text in &a.axis {
                spec.add_axis(parse_axis(text)?);
            }
            apply_exec(&mut spec, &a.exec)?;
            if spec.axes.is_empty() {
                return Err(CliError::Spec("sweep needs at least one axis".into()));
            }
            commands::sweep(&spec, &a.spec.out, mode(a.exec.sequential))
        }
        Command::Report(a) => commands::report(&a.inputs, a.json),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("strata: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
