//! `crossreg`: synthetic cross-source point cloud registration pipeline.
//!
//! Subcommands mirror the pipeline stages: `synth` generates a degraded
//! cloud pair with ground truth, `sample` builds a training pair dataset,
//! `train` fits the descriptor network, `register` aligns two clouds,
//! `sweep` runs the recall experiments, and `experiments` produces the
//! comparison table. Every run is reproducible from (config, seed) and
//! records its full effective configuration beside its outputs.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;
use crossreg_core::Error;

#[derive(Parser)]
#[command(name = "crossreg", version, about = "Cross-source point cloud registration toolkit")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Print the full default configuration as TOML and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a cross-source cloud pair plus its ground-truth transform.
    Synth,
    /// Sample region-based training pairs from an aligned cloud pair.
    Sample {
        #[arg(long)]
        cloud_a: PathBuf,
        #[arg(long)]
        cloud_b: PathBuf,
        /// Ground-truth transform mapping cloud A's frame onto cloud B's.
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// Train the descriptor network on a sampled dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Register a target cloud onto a source cloud.
    Register {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Recall sweeps: rotation, keypoint shifting, or both combined.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Experiment comparison table across weight variants.
    Experiments {
        #[arg(long)]
        trained: PathBuf,
        /// Untrained baseline weights; freshly initialized when omitted.
        #[arg(long)]
        untrained: Option<PathBuf>,
        /// Augmentation-ablated weights, included when given.
        #[arg(long)]
        ablated: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepKind {
    Rotation,
    Shift,
    Both,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are exit code 1; clap's default would be 2.
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    if cli.dump_defaults {
        print!("{}", RunConfig::defaults().to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config(
            "missing subcommand (try --help, or --dump-defaults)".into(),
        ));
    };

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }

    let cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::defaults(),
    }
    .with_master_seed(cli.seed);

    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    let effective = cli.out.join("effective_config.toml");
    std::fs::write(&effective, cfg.to_toml()).map_err(|e| Error::Io {
        path: effective,
        source: e,
    })?;

    match command {
        Command::Synth => commands::synth::run(&cfg, &cli.out),
        Command::Sample {
            cloud_a,
            cloud_b,
            ground_truth,
        } => commands::sample::run(&cfg, &cli.out, &cloud_a, &cloud_b, &ground_truth),
        Command::Train { dataset } => commands::train::run(&cfg, &cli.out, &dataset),
        Command::Register {
            source,
            target,
            weights,
        } => commands::register::run(&cfg, &cli.out, &source, &target, &weights),
        Command::Sweep {
            kind,
            cloud,
            weights,
        } => commands::sweep::run(&cfg, &cli.out, kind, &cloud, &weights),
        Command::Experiments {
            trained,
            untrained,
            ablated,
        } => commands::experiments::run(
            &cfg,
            &cli.out,
            &trained,
            untrained.as_deref(),
            ablated.as_deref(),
        ),
    }
}
