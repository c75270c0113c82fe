//! `goofd`: process monitoring and open-set fault diagnosis experiments.
//!
//! Exit codes: 0 success, 2 user or configuration error, 3 numerical or
//! training failure.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use goofd::Result;
use serde_json::Value;

use config::{Resolver, RunConfig};
use run::AblationMode;

#[derive(Parser)]
#[command(
    name = "goofd",
    version,
    about = "Process monitoring and open-set fault diagnosis with internal contrastive scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset family from a JSON plan
    Synth {
        /// Synthetic plan (JSON)
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the plan seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Process monitoring: train on normal data, flag faults
    Pm(RunArgs),
    /// Open-set fault diagnosis: classify known classes, reject unknown ones
    Osfd(RunArgs),
    /// Vary the rejection rule on one trained open-set model
    Ablate {
        #[arg(value_enum)]
        mode: AblationMode,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON, dotted keys)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<String>,
    #[arg(long)]
    test: Option<String>,
    /// Dataset manifest; defaults to manifest.json next to the training file
    #[arg(long)]
    manifest: Option<String>,
    /// Output directory (default: out)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repeat with this many consecutive seeds and report mean ± std
    #[arg(long)]
    seeds: Option<usize>,
    /// Threshold quantile in percent
    #[arg(long)]
    quantile: Option<f64>,
    /// mahalanobis, euclidean, cityblock or canberra
    #[arg(long)]
    distance: Option<String>,
    /// Extra baseline to evaluate (pca)
    #[arg(long)]
    baseline: Option<String>,
    /// vector or scalar
    #[arg(long)]
    score_mode: Option<String>,
    /// exclude-positive or include-positive
    #[arg(long)]
    denominator_mode: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut r = Resolver::new();
        if let Some(path) = &self.config {
            r.apply_file(path)?;
        }
        r.set_if("train", self.train.clone().map(Value::from))?;
        r.set_if("test", self.test.clone().map(Value::from))?;
        r.set_if("manifest", self.manifest.clone().map(Value::from))?;
        r.set_if("seed", self.seed.map(Value::from))?;
        r.set_if("seeds", self.seeds.map(Value::from))?;
        r.set_if("quantile", self.quantile.map(Value::from))?;
        r.set_if("distance", self.distance.clone().map(Value::from))?;
        r.set_if("baseline", self.baseline.clone().map(Value::from))?;
        r.set_if("icl.score_mode", self.score_mode.clone().map(Value::from))?;
        r.set_if(
            "icl.denominator_mode",
            self.denominator_mode.clone().map(Value::from),
        )?;
        r.finish()
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => run::synth(&config, &out, seed),
        Command::Pm(args) => {
            let cfg = args.resolve()?;
            run::repeated("pm", &cfg, &run::out_dir(args.out), run::pm_once)
        }
        Command::Osfd(args) => {
            let cfg = args.resolve()?;
            run::repeated("osfd", &cfg, &run::out_dir(args.out), run::osfd_once)
        }
        Command::Ablate { mode, run: args } => {
            let cfg = args.resolve()?;
            run::ablate(mode, &cfg, &run::out_dir(args.out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
