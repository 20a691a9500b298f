use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dmfrl::fusion::FusionOptions;
use dmfrl::harness::{
    evaluate, fuse_checkpoints, load_checkpoint, load_experiment_config, run_benchmark, save_checkpoint, train,
    write_metrics_csv, BenchmarkConfig, EvalOptions,
};
use dmfrl::rewards::RewardMode;

#[derive(Parser)]
#[command(name = "dmfrl", version, about = "Train, fuse, evaluate and benchmark goal-conditioned pushing agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent from a config file and save its final checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run seed; defaults to the first seed in the config.
        #[arg(long, env = "DMFRL_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV path; overrides `output` from the config.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Build a fusion actor from the first layers of two or more MLP actors.
    Fuse {
        #[arg(long, num_args = 2.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the fusion head initialization.
        #[arg(long, env = "DMFRL_SEED", default_value_t = 0)]
        seed: u64,
        /// Let the primitive layers train during adaptation.
        #[arg(long)]
        unfreeze: bool,
    },
    /// Greedy evaluation of an actor checkpoint.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, env = "DMFRL_SEED", default_value_t = 0)]
        seed: u64,
        /// Reward used for the reported return: sparse or mgr.
        #[arg(long, default_value = "sparse")]
        reward: String,
        #[arg(long, default_value_t = 0.98)]
        gamma: f64,
    },
    /// Run a method × reward × environment × seed matrix.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads; overrides `benchmark.threads`.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            metrics,
        } => {
            let cfg = load_experiment_config(&config).with_context(|| format!("loading {}", config.display()))?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let outcome = train(&cfg, seed)?;
            for row in &outcome.metrics {
                println!(
                    "episode {:>5}  success_rate {:.3}  avg_return {:.4}",
                    row.episode, row.success_rate, row.avg_return
                );
            }
            save_checkpoint(&out, &outcome.checkpoint)?;
            if let Some(path) = metrics.or(cfg.output_path) {
                write_metrics_csv(&path, &outcome.metrics)?;
            }
            println!("saved {}", out.display());
        }
        Command::Fuse {
            inputs,
            out,
            seed,
            unfreeze,
        } => {
            let sources = inputs
                .iter()
                .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let options = FusionOptions {
                freeze_primitives: !unfreeze,
                ..FusionOptions::default()
            };
            let fused = fuse_checkpoints(&sources, &options, seed)?;
            save_checkpoint(&out, &fused)?;
            println!("fused {} primitives into {}", sources.len(), out.display());
        }
        Command::Evaluate {
            ckpt,
            env,
            episodes,
            seed,
            reward,
            gamma,
        } => {
            let checkpoint = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let options = EvalOptions {
                reward_mode: reward.parse::<RewardMode>()?,
                weights: None,
                gamma,
            };
            let r = evaluate(&checkpoint, &env, episodes, seed, &options)?;
            println!("success_rate={} avg_return={}", r.success_rate, r.avg_return);
        }
        Command::Benchmark {
            config,
            out_dir,
            threads,
        } => {
            let mut cfg = BenchmarkConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(t) = threads {
                if t == 0 {
                    bail!("--threads must be at least 1");
                }
                cfg.threads = t;
            }
            let report = run_benchmark(&cfg, Some(&out_dir), &|msg: &str| eprintln!("{msg}"))?;
            print!("{}", report.summary_table());
            let failures = report.failures();
            if failures > 0 {
                eprintln!("{failures} run(s) failed");
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
