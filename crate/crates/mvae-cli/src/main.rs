//! `mvae`: mesh VAE pipeline driver.
//!
//! Exit codes: 0 success, 2 input/config error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mvae_cli::{commands, config};

#[derive(Parser)]
#[command(
    name = "mvae",
    about = "Mesh variational autoencoder with edge-contraction pooling",
    version
)]
struct Cli {
    /// Run configuration (key = value sections); required by every
    /// subcommand except `synth`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the [train] seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the [output] dir from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh hierarchy for the reference mesh.
    Hierarchy,
    /// Extract scaled deformation features for the whole dataset.
    Features,
    /// Train the model on the extracted features.
    Train,
    /// Sample shapes from the prior and decode them.
    Generate {
        /// Number of shapes to generate.
        #[arg(short = 'n', long, default_value_t = 1)]
        count: usize,
        /// Condition label (conditional models only).
        #[arg(long)]
        label: Option<usize>,
        /// Decode the prior mean (z = 0) instead of sampling.
        #[arg(long)]
        mean: bool,
    },
    /// Linearly interpolate between the posterior means of two shapes.
    Interpolate {
        /// Index of the start shape in the dataset.
        #[arg(long)]
        from: usize,
        /// Index of the end shape in the dataset.
        #[arg(long)]
        to: usize,
        /// Number of frames including both endpoints.
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// 2D embedding over the two largest-variance latent dimensions.
    Embed,
    /// Reconstruction RMS against held-out ground-truth meshes.
    Eval {
        /// Directory of held-out OBJ files sharing the reference
        /// connectivity.
        #[arg(long)]
        heldout: PathBuf,
    },
    /// Generate a procedural toy dataset.
    Synth {
        /// Dataset kind: bent-cylinder, bar-cycle, two-class, or sphere.
        #[arg(long)]
        kind: String,
        /// Output directory for the OBJ files.
        #[arg(long)]
        out: PathBuf,
        /// Number of shapes (0 = the kind's default).
        #[arg(long, default_value_t = 0)]
        shapes: usize,
    },
}

fn run(cli: Cli) -> Result<(), commands::CommandError> {
    if let Command::Synth { kind, out, shapes } = &cli.command {
        return commands::cmd_synth(kind, out, *shapes);
    }
    let config_path = cli.config.as_ref().ok_or_else(|| {
        commands::CommandError::Input("--config is required for this command".to_string())
    })?;
    let mut cfg = config::load_config(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match cli.command {
        Command::Hierarchy => commands::cmd_hierarchy(&cfg),
        Command::Features => commands::cmd_features(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Generate { count, label, mean } => {
            commands::cmd_generate(&cfg, count, cfg.train.seed, label, mean)
        }
        Command::Interpolate { from, to, steps } => {
            commands::cmd_interpolate(&cfg, from, to, steps)
        }
        Command::Embed => commands::cmd_embed(&cfg).map(|_| ()),
        Command::Eval { heldout } => commands::cmd_eval(&cfg, &heldout),
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
