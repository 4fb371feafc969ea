use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{EvalObject, PredictorKind, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "nfps", version, about = "Near-field photometric stereo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic capture with ground truth.
    RenderSynthetic {
        /// Material preset, overriding the configuration.
        #[arg(long)]
        material: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a training dataset.
    GenerateDataset {
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the normal predictor.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct depth and normals from a capture directory.
    Reconstruct {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        predictor: Option<PredictorKind>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Run the far-field baseline.
        #[arg(long)]
        naive: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score estimates against ground truth.
    Evaluate {
        /// Ground-truth directory of an extra object.
        #[arg(long, requires = "estimate")]
        truth: Option<PathBuf>,
        /// Estimate directory of the extra object.
        #[arg(long, requires = "truth")]
        estimate: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Integrate a normal map into depth.
    IntegrateNormals {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::RenderSynthetic { common, .. }
            | Command::GenerateDataset { common, .. }
            | Command::Train { common, .. }
            | Command::Reconstruct { common, .. }
            | Command::Evaluate { common, .. }
            | Command::IntegrateNormals { common, .. } => common,
        }
    }
}

fn absolute(p: &PathBuf) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::io(p, e))
}

/// Loads the configuration and applies the command-line overrides.
pub fn resolve_config(command: &Command) -> Result<RunConfig> {
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    match command {
        Command::RenderSynthetic { material, .. } => {
            if let Some(m) = material {
                cfg.scene.material = m.clone();
            }
        }
        Command::GenerateDataset { count, .. } => {
            if let Some(n) = count {
                cfg.datagen.count = *n;
            }
        }
        Command::Train { dataset, epochs, .. } => {
            if let Some(d) = dataset {
                cfg.train.dataset = Some(absolute(d)?);
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
        }
        Command::Reconstruct {
            input,
            predictor,
            checkpoint,
            naive,
            ..
        } => {
            if let Some(i) = input {
                cfg.reconstruct.input = Some(absolute(i)?);
            }
            if let Some(p) = predictor {
                cfg.reconstruct.predictor = *p;
            }
            if let Some(c) = checkpoint {
                cfg.reconstruct.checkpoint = Some(absolute(c)?);
            }
            cfg.reconstruct.naive |= naive;
        }
        Command::Evaluate { truth, estimate, .. } => {
            if let (Some(t), Some(e)) = (truth, estimate) {
                cfg.evaluate.objects.push(EvalObject {
                    name: t.file_name().map_or("object".into(), |n| n.to_string_lossy().into_owned()),
                    truth: absolute(t)?,
                    estimate: absolute(e)?,
                });
            }
        }
        Command::IntegrateNormals { input, truth, .. } => {
            if let Some(i) = input {
                cfg.integrate.input = Some(absolute(i)?);
            }
            if let Some(t) = truth {
                cfg.integrate.truth = Some(absolute(t)?);
            }
        }
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common();
    if common.threads > 0 {
        // Fails only when a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.threads).build_global();
    }
    let cfg = resolve_config(&cli.command)?;
    let out = &common.out;
    match cli.command {
        Command::RenderSynthetic { .. } => commands::render_synthetic(&cfg, out).map(drop),
        Command::GenerateDataset { .. } => commands::generate_dataset(&cfg, out).map(drop),
        Command::Train { .. } => commands::train_network(&cfg, out).map(drop),
        Command::Reconstruct { .. } => commands::reconstruct(&cfg, out).map(drop),
        Command::Evaluate { .. } => commands::evaluate(&cfg, out).map(drop),
        Command::IntegrateNormals { .. } => commands::integrate_normals(&cfg, out).map(drop),
    }
}
