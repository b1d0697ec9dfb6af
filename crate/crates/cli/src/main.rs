//! Command-line front end: `train` fits a policy for one experiment point,
//! `eval` scores a checkpoint against the optimal and random schemes, and
//! `sweep` runs whole study grids into CSVs with plot scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use specshare_core::{
    arp, evaluate, sweep, train_for_spec, CompositeNet, EnvConfig, ExperimentSpec, SweepConfig,
    TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "specshare",
    version,
    about = "Spectrum sharing for vehicular D2D links with learned feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the policy described by a config file.
    Train {
        /// TOML file with [env], [train], and [spec] sections.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the training curve CSV.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Checkpoint directory (default: <out>/checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against the exhaustive and random baselines.
    Eval {
        /// TOML file with [env] and [spec] sections.
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's test seeds with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the evaluation report CSV.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Trained checkpoint; required unless the spec has no feedback path.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the studies in a sweep config, emitting CSVs and plot scripts.
    Sweep {
        /// TOML file with [env], [train], [base], and [[studies]] entries.
        #[arg(long)]
        config: PathBuf,
        /// Directory the CSVs and plot scripts are written into.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Config file shared by `train` and `eval`. Missing sections and fields
/// take their defaults, so a minimal file only pins what differs.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    env: EnvConfig,
    train: TrainConfig,
    spec: ExperimentSpec,
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_train(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    checkpoint: Option<PathBuf>,
) -> Result<()> {
    let cfg: RunConfig = load_config(config)?;
    let mut spec = cfg.spec;
    if let Some(seed) = seed {
        spec.train_seed = seed;
    }
    let run = train_for_spec(&cfg.env, &cfg.train, &spec)?.context(
        "this spec has no feedback path (mode \"none\" or feedback_count 0); nothing to train",
    )?;

    let mut curve = String::from("episode,return_bps,epsilon,loss_mean\n");
    for ep in &run.episodes {
        writeln!(
            curve,
            "{},{},{},{}",
            ep.episode, ep.return_sum, ep.epsilon, ep.loss_mean
        )?;
    }
    let curve_path = out.join("training_curve.csv");
    write_file(&curve_path, &curve)?;

    let checkpoint = checkpoint.unwrap_or_else(|| out.join("checkpoint"));
    run.composite.save_checkpoint(&checkpoint)?;

    println!(
        "trained {} episodes (seed {}); curve: {}; checkpoint: {}",
        run.episodes.len(),
        spec.train_seed,
        curve_path.display(),
        checkpoint.display()
    );
    Ok(())
}

fn cmd_eval(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    checkpoint: Option<PathBuf>,
) -> Result<()> {
    let cfg: RunConfig = load_config(config)?;
    let mut spec = cfg.spec;
    if let Some(seed) = seed {
        spec.test_seeds = vec![seed];
    }
    let policy = match &checkpoint {
        Some(dir) => Some(CompositeNet::load_checkpoint(dir)?),
        None => None,
    };
    if policy.is_none() && spec.feedback_width() != 0 {
        bail!("this spec expects a trained policy; pass --checkpoint");
    }

    let report = evaluate(policy.as_ref(), &cfg.env, &spec)?;
    let mut csv = String::from(
        "episode,policy_return,optimal_return,random_return,normalized_policy\n",
    );
    for i in 0..report.policy_returns.len() {
        writeln!(
            csv,
            "{i},{},{},{},{}",
            report.policy_returns[i],
            report.optimal_returns[i],
            report.random_returns[i],
            report.normalized_returns[i]
        )?;
    }
    let csv_path = out.join("eval_report.csv");
    write_file(&csv_path, &csv)?;

    let random_arp = arp(&report.random_returns, &report.optimal_returns)?;
    println!(
        "ARP {:.2}% over {} episodes (random baseline {:.2}%); report: {}",
        report.arp,
        report.policy_returns.len(),
        random_arp,
        csv_path.display()
    );
    Ok(())
}

fn cmd_sweep(config: &Path, out: &Path) -> Result<()> {
    let cfg: SweepConfig = load_config(config)?;
    let written = sweep(&cfg, out)?;
    println!("wrote {} files into {}", written.len(), out.display());
    for path in &written {
        println!("  {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            out,
            checkpoint,
        } => cmd_train(&config, seed, &out, checkpoint),
        Command::Eval {
            config,
            seed,
            out,
            checkpoint,
        } => cmd_eval(&config, seed, &out, checkpoint),
        Command::Sweep { config, out } => cmd_sweep(&config, &out),
    }
}
