use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use beamdiff::harness::{
    evaluate, gen_data, load_checkpoint, load_trace, run_sweep, save_checkpoint, summarize, train_models,
    write_loss_csv, write_metrics_csv, write_sweep_csv, Experiment, ExperimentConfig, ProposerKind, Split, SweepSpec,
};

#[derive(Parser)]
#[command(name = "beamdiff", version, about = "Diffusion-based beam candidate generation under a probing budget")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write behavior-policy traces.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the D3PM (and TRM) models on a trace directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding train.jsonl.
        #[arg(long)]
        traces: PathBuf,
        /// Checkpoint path; per-epoch losses go next to it as <out>.loss.csv.
        #[arg(long)]
        out: PathBuf,
        /// Skip the TRM baseline.
        #[arg(long)]
        no_trm: bool,
    },
    /// Evaluate one proposer (or `all`) on held-out trajectories.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value = "d3pm")]
        proposer: String,
        #[arg(long)]
        seeds: Option<usize>,
        /// Metrics CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep and write a long-format CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in configuration profile (`desk` or `full`).
    Profile { name: String },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let exp = Experiment::new(ExperimentConfig::load(&config)?)?;
            gen_data(&exp, &out)?;
            println!("wrote {} and {}", out.join("train.jsonl").display(), out.join("eval.jsonl").display());
        }
        Command::Train { config, traces, out, no_trm } => {
            let cfg = ExperimentConfig::load(&config)?;
            let logs = load_trace(&cfg, &traces.join(Split::Train.file_name()))?;
            let (models, losses) = train_models(&cfg, &logs, true, !no_trm)?;
            save_checkpoint(&out, &models)?;
            let loss_path = out.with_extension("loss.csv");
            write_loss_csv(&loss_path, &losses)?;
            for r in &losses {
                println!("{:>5} epoch {:>3} loss {:.5}", r.model, r.epoch, r.loss);
            }
            println!("wrote {} and {}", out.display(), loss_path.display());
        }
        Command::Eval { config, ckpt, proposer, seeds, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                cfg.eval.seeds = s;
            }
            let kinds: Vec<ProposerKind> = if proposer == "all" {
                ProposerKind::ALL.to_vec()
            } else {
                proposer.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>()?
            };
            let models = match &ckpt {
                Some(path) => load_checkpoint(&cfg, path)?,
                None => Default::default(),
            };
            let exp = Experiment::new(cfg)?;
            let trajectories = exp.trajectories(Split::Eval);
            let mut outcomes = Vec::new();
            for kind in kinds {
                let o = evaluate(&exp, &trajectories, kind, &models, exp.config.eval.seeds, true)
                    .with_context(|| format!("evaluating {kind}"))?;
                let reports: Vec<_> = o.iter().map(|o| o.report.clone()).collect();
                println!("{kind}");
                for s in summarize(&reports) {
                    println!("  {:<16} {:>10.4} ± {:.4}", s.metric, s.mean, s.std);
                }
                outcomes.extend(o);
            }
            if let Some(path) = out {
                write_metrics_csv(&path, &outcomes)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Sweep { spec, out } => {
            let spec = SweepSpec::load(&spec)?;
            let rows = run_sweep(&spec)?;
            for r in rows.iter().filter(|r| r.metric == "failed") {
                eprintln!("grid point {}={} failed: {}", r.axis, r.value, r.note);
            }
            write_sweep_csv(&out, &rows)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Profile { name } => {
            let cfg = match name.as_str() {
                "desk" => ExperimentConfig::desk(),
                "full" => ExperimentConfig::full(),
                other => anyhow::bail!("unknown profile `{other}` (expected desk or full)"),
            };
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
