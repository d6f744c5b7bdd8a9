//! Command-line front end: image I/O, run configuration and subcommands for
//! synthesis, training, harmonization, fitting, evaluation and video.

pub mod commands;
pub mod config;
pub mod io;
pub mod video;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use whitebox_core::regressor::{LossMode, RegressorMode};

use crate::commands::FitMethod;
use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "whitebox", version, about = "White-box filter image harmonization")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Filter list (`["brightness","contrast"]`) or pipeline document.
    #[arg(long, global = true)]
    pub pipeline: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// EMA coefficient for video.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// cascade | multihead
    #[arg(long, global = true)]
    pub mode: Option<RegressorMode>,
    /// staged | final
    #[arg(long, global = true)]
    pub loss: Option<LossMode>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Harmonize one composite; prints the predicted arguments as JSON.
    Harmonize {
        #[arg(long)]
        composite: PathBuf,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Generate training composites from natural images or procedural scenes.
    Synth {
        /// Directory of natural images, each with a `<name>_mask` file.
        #[arg(long, conflicts_with = "procedural")]
        input: Option<PathBuf>,
        /// Number of procedural scenes to use instead of `--input`.
        #[arg(long, default_value_t = 0)]
        procedural: usize,
    },
    /// Train a regressor; writes model.json and history.csv.
    Train {
        /// Output directory of `synth`.
        #[arg(long, conflicts_with = "procedural")]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        procedural: usize,
    },
    /// Fit arguments directly against a known target; prints the result.
    Fit {
        #[arg(long)]
        composite: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value = "gradient")]
        method: FitMethod,
    },
    /// Score outputs against ground truth; writes eval.csv.
    Eval {
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        truths: PathBuf,
        #[arg(long)]
        masks: PathBuf,
    },
    /// Harmonize an ordered frame sequence with smoothed arguments.
    Video {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        masks: PathBuf,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            pipeline: self.pipeline.clone(),
            model: self.model.clone(),
            alpha: self.alpha,
            mode: self.mode,
            loss: self.loss,
            out: self.out.clone(),
        }
    }
}

/// Runs one parsed command line, writing results to standard output.
pub fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(cli.global.config.as_deref(), &cli.global.overrides())?;
    match &cli.command {
        Command::Harmonize { composite, mask } => {
            let theta = commands::harmonize_cmd(&config, composite, mask)?;
            println!("{}", serde_json::to_string(&theta)?);
        }
        Command::Synth { input, procedural } => {
            let records = commands::synth_cmd(&config, input.as_deref(), *procedural)?;
            println!("{} samples written to {}", records.len(), config.out.display());
        }
        Command::Train { data, procedural } => {
            let path = commands::train_cmd(&config, data.as_deref(), *procedural)?;
            println!("{}", path.display());
        }
        Command::Fit {
            composite,
            mask,
            target,
            method,
        } => {
            let r = commands::fit_cmd(&config, composite, mask, target, *method)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Eval {
            outputs,
            truths,
            masks,
        } => {
            let mean = commands::eval_cmd(&config, outputs, truths, masks)?;
            println!(
                "mse {:.4} fmse {:.4} psnr {:.4}",
                mean.mse, mean.fmse, mean.psnr
            );
        }
        Command::Video { frames, masks } => {
            let n = commands::video_cmd(&config, frames, masks)?;
            println!("{n} frames written to {}", config.out.display());
        }
    }
    Ok(())
}
