use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dntwin_core::harness::{
    output_root, plan_sweep, replay_experiment, run_experiment, run_sweep, Axis, ExperimentConfig, RunSummary,
    OUTPUT_ROOT_ENV,
};
use dntwin_core::netmodel::RequestTrace;
use dntwin_core::Error;

/// Digital network twin experiments: edge caching, clustered federated
/// twins and Byzantine-robust federated driving.
#[derive(Parser)]
#[command(name = "dntwin", version, after_help = format!("Runs are written under ${OUTPUT_ROOT_ENV} (default ./runs).\nExit codes: 0 ok, 1 config error, 2 runtime error."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its summary as JSON.
    Run {
        config: PathBuf,
        /// Run directory; overrides the output root and `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cross-product of the axes over several seeds.
    Sweep {
        config: PathBuf,
        /// `dotted.key=v1,v2`; repeat for more axes.
        #[arg(long = "axis")]
        axes: Vec<String>,
        /// Consecutive seeds per cell, starting at the config's seed.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a config, print its hash and canonical form.
    Validate { config: PathBuf },
    /// Evaluate a caching config on a recorded request trace.
    Replay {
        trace: PathBuf,
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

/// Errors after loading are runtime failures unless they point at a config
/// key, such as replaying a non-caching config.
impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config { .. }) => Failure::Config(e),
            _ => Failure::Runtime(e),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| Failure::Config(e.into()))
}

/// Error chain on one line, skipping causes already quoted by their parent.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if !out.contains(&s) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&s);
        }
    }
    out
}

fn print_summary(summary: &RunSummary) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let dir = match out {
                Some(d) => d,
                None => cfg.run_dir(&output_root()).map_err(anyhow::Error::from)?,
            };
            let summary = run_experiment(&cfg, &dir).with_context(|| format!("run in {}", dir.display()))?;
            eprintln!("wrote {}", dir.display());
            print_summary(&summary)?;
        }
        Command::Sweep {
            config,
            axes,
            seeds,
            jobs,
            out,
        } => {
            let base = load(&config)?;
            let axes = axes
                .iter()
                .map(|a| a.parse::<Axis>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Config(e.into()))?;
            let runs = plan_sweep(&base, &axes, seeds).map_err(|e| Failure::Config(e.into()))?;
            let dir = match out {
                Some(d) => d,
                None => {
                    let id = dntwin_core::harness::experiment::sweep_id(&base, &axes, seeds).map_err(anyhow::Error::from)?;
                    output_root().join(format!("sweep-{}", &id[..12]))
                }
            };
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let total = runs.len();
            let report = run_sweep(runs, &dir, jobs).with_context(|| format!("sweep in {}", dir.display()))?;
            for o in &report.outcomes {
                let tag: Vec<String> = o.run.assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
                match &o.result {
                    Ok(_) => println!("ok     cell {} seed {} {}", o.run.cell, o.run.config.seed, tag.join(" ")),
                    Err(e) => println!("FAILED cell {} seed {} {}: {e}", o.run.cell, o.run.config.seed, tag.join(" ")),
                }
            }
            println!("{} of {total} runs ok; tables in {}", total - report.failures(), dir.display());
            if report.failures() > 0 {
                return Err(Failure::Runtime(anyhow::anyhow!("{} sweep runs failed", report.failures())));
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            cfg.check_round_trip()
                .map_err(|e| Failure::Config(anyhow::Error::from(e).context("canonical form")))?;
            println!("config_hash = \"{}\"", cfg.config_hash().map_err(anyhow::Error::from)?);
            print!("{}", cfg.to_toml().map_err(anyhow::Error::from)?);
        }
        Command::Replay { trace, config, out } => {
            let cfg = load(&config)?;
            let requests = RequestTrace::load(&trace).with_context(|| format!("reading trace {}", trace.display()))?;
            let dir = match out {
                Some(d) => d,
                None => cfg.run_dir(&output_root()).map_err(anyhow::Error::from)?.with_extension("replay"),
            };
            let summary = replay_experiment(&cfg, &requests, &dir).with_context(|| format!("replay in {}", dir.display()))?;
            eprintln!("wrote {}", dir.display());
            print_summary(&summary)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {}", render(&e));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("runtime error: {}", render(&e));
            ExitCode::from(2)
        }
    }
}
