use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grounder_cli::{
    config::RunConfig,
    error::CliError,
    eval::{load_run_context, run_eval, EvalMode, EvalOptions},
    tools::{inspect_checkpoint, run_convert, run_synth},
    train::run_train,
};
use grounder_data::SynthSpec;

#[derive(Parser)]
#[command(name = "grounder", version, about = "Desk-scale grounding/detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a dataset manifest and write a checkpoint plus loss curve.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset manifest.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// ovd | pg | rec | d3-concat | d3-parallel
        #[arg(long)]
        mode: String,
        /// Score threshold for the perfect-F1 protocol.
        #[arg(long)]
        threshold: Option<f64>,
        /// Add the threshold-sweep table to the report.
        #[arg(long)]
        sweep: bool,
    },
    /// Evaluate with the full threshold sweep (rec protocol).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Convert COCO-style detection JSON into the unified format.
    Convert {
        /// COCO json file.
        #[arg(long)]
        coco: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "converted")]
        name: String,
    },
    /// Generate a synthetic rectangle-world dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        images: usize,
        #[arg(long, default_value_t = 2)]
        categories: usize,
        #[arg(long, default_value_t = 1)]
        boxes: usize,
        #[arg(long, default_value_t = 32)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a checkpoint's parameter manifest.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            common,
            manifest,
            steps,
        } => {
            let config = load_config(&common)?;
            let outcome = run_train(&config, &manifest, steps, &common.out)?;
            let last = outcome.losses.last();
            println!(
                "trained {} steps; final loss {}",
                outcome.losses.len(),
                last.map(|l| l.total).unwrap_or(f64::NAN)
            );
            println!("checkpoint: {}", outcome.checkpoint_path.display());
        }
        Command::Eval {
            common,
            checkpoint,
            manifest,
            mode,
            threshold,
            sweep,
        } => {
            let (mut config, vocab) = load_run_context(&checkpoint, common.config.as_deref())?;
            if let Some(seed) = common.seed {
                config.seed = seed;
            }
            let options = EvalOptions {
                mode: EvalMode::parse(&mode)?,
                threshold,
                sweep,
            };
            let report = run_eval(&checkpoint, &config, &vocab, &manifest, &options, &common.out)?;
            print!("{}", report.render_text());
        }
        Command::Sweep {
            common,
            checkpoint,
            manifest,
        } => {
            let (config, vocab) = load_run_context(&checkpoint, common.config.as_deref())?;
            let options = EvalOptions {
                mode: EvalMode::Rec,
                threshold: None,
                sweep: true,
            };
            let report = run_eval(&checkpoint, &config, &vocab, &manifest, &options, &common.out)?;
            print!("{}", report.render_text());
        }
        Command::Convert { coco, out, name } => {
            let outcome = run_convert(&coco, &out, &name)?;
            println!(
                "converted {} images, {} instances ({} crowd annotations dropped)",
                outcome.n_images, outcome.n_instances, outcome.crowd_dropped
            );
        }
        Command::Synth {
            out,
            images,
            categories,
            boxes,
            size,
            seed,
        } => {
            let spec = SynthSpec {
                n_images: images,
                n_categories: categories,
                boxes_per_image: boxes,
                image_size: size,
                seed,
            };
            run_synth(&spec, &out)?;
            println!("wrote {images} images to {}", out.display());
        }
        Command::Inspect { checkpoint } => {
            print!("{}", inspect_checkpoint(&checkpoint)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
