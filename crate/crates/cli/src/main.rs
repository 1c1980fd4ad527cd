//! `volpretext`: phantom generation, preprocessing, pretext training,
//! feature extraction, downstream evaluation, leakage audit and reporting.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CliResult, Failure, Settings};

#[derive(Parser)]
#[command(name = "volpretext", version, about)]
struct Cli {
    /// JSON config with flat dotted keys; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// paper192 or desk32.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Run directory for all outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom cohort and its manifest.
    Gen(GenArgs),
    /// Resize, normalize and equalize every volume of a cohort.
    Prep(PrepArgs),
    /// Train one pretext task and write a checkpoint and train log.
    Pretrain(PretrainArgs),
    /// Encode a cohort with a checkpoint into a feature table.
    Extract(ExtractArgs),
    /// Cross-validate SVC and RFC on a feature table.
    Eval(EvalArgs),
    /// Check a split plan for subject, augmentation and pretraining leakage.
    Audit(AuditArgs),
    /// Merge train logs and metrics into a summary with plots.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// pretrain (CN only) or eval (CN and AD).
    #[arg(long)]
    role: Option<String>,
    #[arg(long)]
    subjects: Option<u64>,
    #[arg(long)]
    grid: Option<u64>,
    #[arg(long)]
    scans_min: Option<u64>,
    #[arg(long)]
    scans_max: Option<u64>,
    #[arg(long)]
    ad_fraction: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    severity_min: Option<f64>,
    #[arg(long)]
    severity_max: Option<f64>,
}

#[derive(Args)]
struct PrepArgs {
    /// Cohort directory written by `gen`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    edge: Option<u64>,
    #[arg(long)]
    tiles_per_axis: Option<u64>,
    #[arg(long)]
    bins: Option<u64>,
    #[arg(long)]
    clip_limit: Option<f64>,
}

#[derive(Args)]
struct PretrainArgs {
    /// Preprocessed pretraining cohort directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// age, rotation, reconstruction or multihead.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch_size: Option<u64>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    lr_step: Option<u64>,
    #[arg(long)]
    lr_gamma: Option<f64>,
    /// Source edge of the random crop; 0 disables cropping.
    #[arg(long)]
    crop_source: Option<u64>,
    #[arg(long)]
    crop_target: Option<u64>,
    /// unique24 or paper32.
    #[arg(long)]
    label_scheme: Option<String>,
    #[arg(long)]
    dropout_p: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Run directory of `pretrain`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Preprocessed evaluation cohort directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    cdr_threshold: Option<f64>,
    #[arg(long)]
    batch: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// features.csv written by `extract`.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    svm_epochs: Option<u64>,
    #[arg(long)]
    trees: Option<u64>,
    #[arg(long)]
    min_samples_split: Option<u64>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Split plan JSON; without it a grouped k-fold plan is built.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Manifest of the pretraining cohort.
    #[arg(long)]
    pretrain_manifest: Option<PathBuf>,
    #[arg(long)]
    k: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories holding trainlog.jsonl and/or metrics.json.
    inputs: Vec<PathBuf>,
}

fn path_value(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn configure_threads() -> CliResult<()> {
    match std::env::var("VOLPRETEXT_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| {
                Failure::config(format!(
                    "VOLPRETEXT_THREADS must be a non-negative integer, got '{v}'"
                ))
            })?;
            volcore::par::configure_threads(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let mut s = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    s.set("seed", cli.seed);
    s.set("preset", cli.preset);
    s.set("out", path_value(cli.out));
    match cli.command {
        Command::Gen(a) => {
            s.set("gen.role", a.role);
            s.set("gen.subjects", a.subjects);
            s.set("gen.grid", a.grid);
            s.set("gen.scans_min", a.scans_min);
            s.set("gen.scans_max", a.scans_max);
            s.set("gen.ad_fraction", a.ad_fraction);
            s.set("gen.noise_sigma", a.noise_sigma);
            s.set("gen.severity_min", a.severity_min);
            s.set("gen.severity_max", a.severity_max);
            commands::gen(&mut s)
        }
        Command::Prep(a) => {
            s.set("prep.input", path_value(a.input));
            s.set("prep.edge", a.edge);
            s.set("prep.clahe.tiles_per_axis", a.tiles_per_axis);
            s.set("prep.clahe.bins", a.bins);
            s.set("prep.clahe.clip_limit", a.clip_limit);
            commands::prep(&mut s)
        }
        Command::Pretrain(a) => {
            s.set("pretrain.data", path_value(a.data));
            s.set("pretrain.task", a.task);
            s.set("pretrain.epochs", a.epochs);
            s.set("pretrain.batch_size", a.batch_size);
            s.set("pretrain.base_lr", a.base_lr);
            s.set("pretrain.lr_step", a.lr_step);
            s.set("pretrain.lr_gamma", a.lr_gamma);
            s.set("pretrain.crop_source", a.crop_source);
            s.set("pretrain.crop_target", a.crop_target);
            s.set("pretrain.label_scheme", a.label_scheme);
            s.set("pretrain.dropout_p", a.dropout_p);
            commands::pretrain(&mut s)
        }
        Command::Extract(a) => {
            s.set("extract.model", path_value(a.model));
            s.set("extract.data", path_value(a.data));
            s.set("extract.cdr_threshold", a.cdr_threshold);
            s.set("extract.batch", a.batch);
            commands::extract(&mut s)
        }
        Command::Eval(a) => {
            s.set("eval.features", path_value(a.features));
            s.set("eval.k", a.k);
            s.set("eval.svm.c", a.svm_c);
            s.set("eval.svm.epochs", a.svm_epochs);
            s.set("eval.forest.trees", a.trees);
            s.set("eval.forest.min_samples_split", a.min_samples_split);
            commands::eval(&mut s)
        }
        Command::Audit(a) => {
            s.set("audit.manifest", path_value(a.manifest));
            s.set("audit.plan", path_value(a.plan));
            s.set("audit.pretrain_manifest", path_value(a.pretrain_manifest));
            s.set("audit.k", a.k);
            commands::audit(&mut s)
        }
        Command::Report(a) => {
            if !a.inputs.is_empty() {
                let list: Vec<String> = a.inputs.iter().map(|p| p.display().to_string()).collect();
                s.set("report.inputs", Some(list));
            }
            commands::report(&mut s)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(config::EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
