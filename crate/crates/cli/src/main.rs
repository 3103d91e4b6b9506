//! `fovdiff` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fovdiff", version, about = "Diffusion-based CT field-of-view completion")]
struct Cli {
    /// Worker threads for per-sample parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Suppress progress output.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the MLP denoiser on simulated phantoms.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Checkpoint path; defaults to `denoiser.checkpoint`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw unconditional samples with DDPM or DDIM.
    Sample {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory; defaults to `<output.dir>/samples`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Complete truncated images with a RePaint sampler.
    Inpaint {
        #[command(flatten)]
        config: ConfigArg,
        /// Truncated image grid.
        #[arg(long, requires = "mask", conflicts_with = "dataset")]
        input: Option<PathBuf>,
        /// Known-pixel mask grid (1 inside the FOV).
        #[arg(long, requires = "input")]
        mask: Option<PathBuf>,
        /// Simulated split directory to complete case by case.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output grid (single image) or directory (dataset).
        #[arg(long)]
        out: PathBuf,
        /// Input and output are in Hounsfield units.
        #[arg(long)]
        hu: bool,
    },
    /// Generate a phantom and truncation dataset.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Split directory; defaults to `<output.dir>/data/<data.split>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score completions against a simulated split.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        completed: PathBuf,
        /// Report directory; defaults to `<output.dir>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write an error-vs-TCI scatter plot.
        #[arg(long)]
        plot: bool,
    },
    /// Simulate, inpaint and evaluate in one run.
    Benchmark {
        #[command(flatten)]
        config: ConfigArg,
        /// Train the denoiser first instead of loading the checkpoint.
        #[arg(long)]
        train: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command, cli.workers) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err.chain().any(|e| {
                e.downcast_ref::<fovdiff::Error>()
                    .is_some_and(fovdiff::Error::is_validation)
            });
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
