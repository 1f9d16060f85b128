//! `bootood` command-line interface.
//!
//! Exit status: 0 on success, 1 for configuration and usage errors, 2 for
//! runtime and numerical failures, 3 for I/O and file-format errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bootood::app::{self, CHECKPOINT_FILE};
use bootood::config::RunConfig;
use bootood::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bootood", version, about = "Training-time OOD detection with radius shells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (flat `key = value` TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed. For `ablate` it replaces the seed list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, then evaluate it with the configured scorers.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the near/far OOD sets and extra feature files.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate [default: <out>/checkpoint.bin].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Scorer token, repeatable or comma separated; `auto` selects one on validation data.
        #[arg(long, value_delimiter = ',')]
        scorer: Vec<String>,
        /// Extra OOD set as `name=path` to a feature file (binary, or CSV by extension).
        #[arg(long, value_parser = parse_named_path)]
        ood: Vec<(String, PathBuf)>,
    },
    /// Run the ablation grid and write aggregated deltas.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Grid overrides, e.g. `variants=full,no-sep;k=1,4;seeds=0,1`.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Neural-collapse diagnostics and histograms of a checkpoint.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to inspect [default: <out>/checkpoint.bin].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got `{s}`")),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_toml(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.seeds = vec![seed];
    }
    cfg.experiment()?;
    Ok(cfg)
}

fn checkpoint_path(explicit: Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| out.join(CHECKPOINT_FILE))
}

fn print_reports(reports: &[bootood::metrics::EvalReport]) {
    println!(
        "{:<16} {:<8} {:>8} {:>8} {:>8}",
        "scorer", "set", "auroc", "fpr95", "aupr_in"
    );
    for r in reports {
        println!(
            "{:<16} {:<8} {:>8.4} {:>8.4} {:>8.4}",
            r.scorer, r.ood_set, r.auroc, r.fpr95, r.aupr_in
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let summary = app::cmd_train(&cfg, &common.out)?;
            match summary.phase2_start {
                Some(t) => println!("phase 2 began at iteration {t}"),
                None => println!("phase 2 never began"),
            }
            println!("train accuracy {:.4}", summary.train_accuracy);
            print_reports(&summary.reports);
        }
        Command::Eval {
            common,
            checkpoint,
            scorer,
            ood,
        } => {
            let cfg = load_config(&common)?;
            let ckpt = checkpoint_path(checkpoint, &common.out);
            let scorers = (!scorer.is_empty()).then_some(scorer.as_slice());
            let reports = app::cmd_eval(&cfg, &ckpt, scorers, &ood, &common.out)?;
            print_reports(&reports);
        }
        Command::Ablate { common, grid } => {
            let cfg = load_config(&common)?;
            let rows = app::cmd_ablate(&cfg, grid.as_deref(), &common.out)?;
            println!(
                "{} aggregated rows written to {}",
                rows.len(),
                common.out.join(app::ABLATION_FILE).display()
            );
        }
        Command::Diagnose { common, checkpoint } => {
            let cfg = load_config(&common)?;
            let ckpt = checkpoint_path(checkpoint, &common.out);
            let report = app::cmd_diagnose(&cfg, &ckpt, &common.out)?;
            println!("nc1            {:.6}", report.nc1);
            println!("norm_cv        {:.6}", report.norm_cv);
            println!("etf_deviation  {:.6}", report.etf_deviation);
            if let Some(e) = report.train_error {
                println!("train_error    {e:.6}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &Error) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(2)
}
