use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use avsdn_core::checkpoint;
use avsdn_core::data::generate_synthetic;
use avsdn_core::kv::KeyValues;
use avsdn_core::train::{class_names, evaluate, evaluate_checkpoint, gradcheck, train_manifest};
use avsdn_core::{InitMode, Precision, Setting, Split, SynthConfig, TrainConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avsdn", version, about = "Audio-visual event localization with a dual sequence network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: feature files plus manifest.txt.
    Synth {
        /// key=value file (C, d_a, d_v, T, train, val, test, noise_sigma,
        /// prototype_scale, background_overlap, seed).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on a manifest's train split, selecting on val; reports test accuracy.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Verify analytic gradients against central differences on a tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// key=value file with any training option (and optionally manifest/out).
    /// Flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Checkpoint destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    setting: Option<Setting>,
    #[arg(long)]
    init: Option<InitMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    precision: Option<Precision>,
    #[arg(long)]
    threads: Option<usize>,
    /// Gradient clipping threshold, or "none".
    #[arg(long)]
    clip_norm: Option<String>,
}

fn read_kv(path: &Path) -> Result<KeyValues> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    KeyValues::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn synth(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<()> {
    let mut cfg = match config {
        Some(path) => SynthConfig::from_key_values(&read_kv(&path)?)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let (manifest, path) = generate_synthetic(&cfg, &out)?;
    println!(
        "wrote {} videos ({} categories) to {}",
        manifest.entries.len(),
        manifest.num_categories(),
        path.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut kv = match &args.config {
        Some(path) => read_kv(path)?,
        None => KeyValues::default(),
    };
    let manifest = args
        .manifest
        .or_else(|| kv.remove("manifest").map(PathBuf::from))
        .context("--manifest is required (flag or config key)")?;
    let out = args.out.or_else(|| kv.remove("out").map(PathBuf::from));

    let overrides = [
        ("setting", args.setting.map(|v| v.to_string())),
        ("init", args.init.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("lr", args.lr.map(|v| v.to_string())),
        ("hidden", args.hidden.map(|v| v.to_string())),
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("patience", args.patience.map(|v| v.to_string())),
        ("precision", args.precision.map(|v| v.to_string())),
        ("threads", args.threads.map(|v| v.to_string())),
        ("clip_norm", args.clip_norm),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            kv.insert(key, v);
        }
    }
    let cfg = TrainConfig::from_key_values(&kv)?;

    println!("epoch\tloss\tval_acc");
    let (ds, outcome) = train_manifest(&manifest, &cfg, |e| println!("{e}"))?;
    eprintln!(
        "best epoch {} with val accuracy {:.4}",
        outcome.best_epoch, outcome.best_val_acc
    );
    if let Some(out) = &out {
        checkpoint::save(&outcome.params, out)?;
        eprintln!("saved checkpoint to {}", out.display());
    }
    let test = ds.load_split(&manifest, Split::Test)?;
    if test.is_empty() {
        eprintln!("no test split; skipping test evaluation");
    } else {
        let report = evaluate(&outcome.params, &test, &class_names(&ds))?;
        eprintln!("test accuracy {:.4}", report.accuracy);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { config, out, seed } => synth(config, out, seed)?,
        Command::Train(args) => train(args)?,
        Command::Eval {
            checkpoint,
            manifest,
            split,
        } => {
            let report = evaluate_checkpoint(&checkpoint, &manifest, split)?;
            print!("{report}");
        }
        Command::Gradcheck { seed } => {
            let report = gradcheck(seed)?;
            println!("{report}");
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
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
