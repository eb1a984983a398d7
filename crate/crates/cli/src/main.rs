use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use srfe_cli::config::{effective_config, OutputSlot, Overrides};
use srfe_cli::{cmd_eval, cmd_extract, cmd_report, cmd_split, cmd_train, FeatureSelection};

#[derive(Parser)]
#[command(name = "srfe", version, about = "Spectral and rhythm features for environmental sound classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// mel | mfcc | tempogram | chroma_stft | chroma_cqt | chroma_cens | all
    #[arg(long, global = true)]
    feature: Option<FeatureSelection>,
    #[arg(long, global = true)]
    audio_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output location of the subcommand (feature dir, split file,
    /// checkpoint dir, report dir, or table dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Extraction threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Decode clips and write feature images.
    Extract,
    /// Write the stratified train/validation split.
    Split,
    /// Train one model per feature kind.
    Train,
    /// Evaluate checkpoints on the validation split.
    Eval,
    /// Tabulate report JSONs as heatmap CSVs.
    Report {
        /// Report files; default: every report in the report directory.
        reports: Vec<PathBuf>,
    },
}

impl Common {
    fn overrides(&self, command: &Command) -> Overrides {
        let slot = match command {
            Command::Extract => OutputSlot::FeatureDir,
            Command::Split => OutputSlot::SplitFile,
            Command::Train => OutputSlot::CheckpointDir,
            Command::Eval | Command::Report { .. } => OutputSlot::ReportDir,
        };
        Overrides {
            feature: self.feature,
            audio_dir: self.audio_dir.clone(),
            manifest: self.manifest.clone(),
            out: self.out.clone().map(|p| (slot, p)),
            seed: self.seed,
            epochs: self.epochs,
            workers: self.workers,
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = effective_config(cli.common.config.as_deref(), &cli.common.overrides(&cli.command))?;
    match cli.command {
        Command::Extract => {
            let summary = cmd_extract(&cfg)?;
            eprintln!("wrote {} feature file(s), {} clip(s) failed", summary.written, summary.failures.len());
            for (file, reason) in &summary.failures {
                eprintln!("  failed: {file}: {reason}");
            }
            Ok(summary.failures.is_empty())
        }
        Command::Split => {
            cmd_split(&cfg)?;
            Ok(true)
        }
        Command::Train => {
            for o in cmd_train(&cfg)? {
                if let Some(b) = o.history.best_record() {
                    println!("{}: best epoch {} val_loss {:.4} val_acc {:.3} -> {}", o.kind, b.epoch, b.val_loss, b.val_acc, o.checkpoint.display());
                }
            }
            Ok(true)
        }
        Command::Eval => {
            for r in cmd_eval(&cfg)? {
                println!("{}: accuracy {:.3} macro_f1 {:.3}", r.feature, r.report.accuracy, r.report.class_macro.f1);
            }
            Ok(true)
        }
        Command::Report { reports } => {
            let out = cfg.report_dir.clone();
            for name in cmd_report(&cfg, &reports, &out)?.keys() {
                println!("{}", out.join(name).display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SRFE_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
