//! Command-line driver: synthesize data, run hypothesis comparisons, compare
//! result sets and inspect attention.

pub mod attention;
pub mod compare;
pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod svg;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use taskfx::evaluation::PairFilter;
use taskfx::synth::{generate_dataset, GenerativeConfig};

use crate::config::{parse_hypotheses, parse_sizes, read_json, RunConfig};
use crate::error::{CliError, CliResult, StageExt};

#[derive(Debug, Parser)]
#[command(name = "taskfx", version, about = "Compare task/stimulus encoding hypotheses on trial-level brain data")]
pub struct Cli {
    /// Worker threads (default: all cores). 1 gives bitwise-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a generative config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cross-validate hypotheses and write results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the fold and solver seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated list, e.g. `H1,H3`.
        #[arg(long)]
        hypotheses: Option<String>,
        /// Comma-separated training sizes, e.g. `100,300,600,1044`.
        #[arg(long)]
        learning_curve: Option<String>,
    },
    /// Paired per-window tests between results directories.
    Compare {
        #[arg(required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "all")]
        filter: String,
        #[arg(long, default_value_t = 0.05)]
        q: f64,
    },
    /// Attention report for H41/H42 models.
    Attention {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Task feature CSV.
        #[arg(long)]
        task: PathBuf,
        /// Auxiliary question CSV (H41 models).
        #[arg(long)]
        aux: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate the data a run config points at.
    IngestCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Runs a parsed command on a pool of the requested size.
pub fn execute(cli: Cli) -> CliResult<()> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let n = pool.current_num_threads();
    pool.install(|| dispatch(cli.command, n))
}

fn dispatch(command: Command, threads: usize) -> CliResult<()> {
    match command {
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed),
        Command::Run {
            config,
            out,
            seed,
            hypotheses,
            learning_curve,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.folds.seed = s;
                cfg.solver.seed = s;
            }
            if let Some(h) = hypotheses {
                cfg.hypotheses = parse_hypotheses(&h)?;
            }
            if let Some(l) = learning_curve {
                cfg.learning_curve = parse_sizes(&l)?;
            }
            cfg.validate()?;
            let out = run::output_dir(out, &cfg)?;
            let summary = run::cmd_run(&cfg, &out, threads)?;
            println!(
                "ranking ({}): {}",
                summary.ranking_filter,
                summary.ranking.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(" > ")
            );
            Ok(())
        }
        Command::Compare {
            results,
            out,
            filter,
            q,
        } => {
            let filter: PairFilter = filter.parse().map_err(|e: taskfx::Error| CliError::Config(e.to_string()))?;
            let cmp = compare::cmd_compare(&results, filter, q, &out)?;
            let n = cmp.rows.iter().filter(|r| r.rejected).count();
            println!("{} comparisons, {n} significant windows", cmp.rows.len());
            Ok(())
        }
        Command::Attention {
            models,
            task,
            aux,
            top_k,
            out,
        } => {
            let report = attention::cmd_attention(&models, &task, aux.as_deref(), top_k, &out)?;
            for (i, j, s) in &report.similarity {
                println!("{} vs {}: {s:.4}", report.labels[*i], report.labels[*j]);
            }
            Ok(())
        }
        Command::IngestCheck { config } => {
            let cfg = RunConfig::load(&config)?;
            let inputs = run::load_inputs(&cfg)?;
            println!(
                "stimulus {} x {}, task {} x {}",
                inputs.stimulus.n_rows(),
                inputs.stimulus.n_features(),
                inputs.task.n_rows(),
                inputs.task.n_features()
            );
            for (k, ds) in inputs.datasets.iter().enumerate() {
                println!(
                    "subject {k}: {} trials ({} dropped), {} words, {} questions, {} sensors x {} windows of {} ms",
                    ds.design.n_trials(),
                    ds.dropped_trials.len(),
                    ds.design.words().len(),
                    ds.design.questions().len(),
                    ds.n_sensors,
                    ds.n_windows,
                    ds.window_ms
                );
            }
            Ok(())
        }
    }
}

pub fn cmd_synth(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: GenerativeConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let data = generate_dataset(&cfg).stage("generating data")?;
    data.save(out).map_err(|e| match e {
        taskfx::Error::Io { .. } => CliError::Io(e.to_string()),
        e => CliError::Stage {
            stage: "writing data".into(),
            source: e,
        },
    })?;
    info!("wrote {} trials x {} subjects to {}", data.design.n_trials(), data.subjects.len(), out.display());
    Ok(())
}
