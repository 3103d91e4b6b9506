//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use fovdiff::fov::Mask;
use fovdiff::io::config::DenoiserConfig;
use fovdiff::io::dataset::{
    completed_path, evaluate_dataset, load_inputs, load_manifest, phantom_images, write_dataset,
};
use fovdiff::io::report::{render_error_plot, save_report};
use fovdiff::io::{denormalize_hu, load_grid, normalize_hu, parse_config, save_grid, Dtype, RunConfig};
use fovdiff::parallel::map_indexed;
use fovdiff::samplers::{run_variant, sample_batch};
use fovdiff::train::{read_checkpoint, train, write_checkpoint, MlpDenoiser};
use fovdiff::{Denoiser, Error, Grid, NoiseStream, SamplerRun, Shape};

use crate::{Command, ConfigArg};

pub fn run(command: Command, workers: usize) -> Result<()> {
    match command {
        Command::Train { config, out } => {
            let config = load_config(&config)?;
            train_model(&config, out.as_deref(), workers).map(|_| ())
        }
        Command::Sample { config, out } => {
            let config = load_config(&config)?;
            let out = out.unwrap_or_else(|| config.output.dir.join("samples"));
            sample_cmd(&config, &out, workers)
        }
        Command::Inpaint {
            config,
            input,
            mask,
            dataset,
            out,
            hu,
        } => {
            let config = load_config(&config)?;
            match (input, mask, dataset) {
                (Some(input), Some(mask), None) => inpaint_file(&config, &input, &mask, &out, hu),
                (None, None, Some(dataset)) => {
                    if hu {
                        bail!(invalid("--hu", "datasets are stored normalized; drop --hu"));
                    }
                    inpaint_dataset(&config, &dataset, &out, workers)
                }
                _ => bail!(invalid("inpaint", "give either --input and --mask, or --dataset")),
            }
        }
        Command::Simulate { config, out } => {
            let config = load_config(&config)?;
            let out = out.unwrap_or_else(|| split_dir(&config));
            simulate(&config, &out, workers)
        }
        Command::Evaluate {
            config,
            dataset,
            completed,
            out,
            plot,
        } => {
            let config = load_config(&config)?;
            let out = out.unwrap_or_else(|| config.output.dir.join("report"));
            evaluate(&config, &dataset, &completed, &out, plot, workers)
        }
        Command::Benchmark { config, train } => {
            let config = load_config(&config)?;
            benchmark(&config, train, workers)
        }
    }
}

fn invalid(key: &str, message: &str) -> Error {
    Error::ConfigValue {
        key: key.into(),
        message: message.into(),
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    let mut config = match &arg.config {
        Some(path) => parse_config(path).with_context(|| format!("reading config {}", path.display()))?,
        None => {
            let c = RunConfig::default();
            c.validate()?;
            c
        }
    };
    if let Ok(seed) = std::env::var("DIFG_SEED") {
        config.sampler.seed = seed
            .trim()
            .parse()
            .map_err(|_| invalid("DIFG_SEED", "must be an unsigned integer"))?;
        info!("sampler seed overridden to {}", config.sampler.seed);
    }
    Ok(config)
}

fn split_dir(config: &RunConfig) -> PathBuf {
    config.output.dir.join("data").join(&config.data.split)
}

fn load_denoiser(config: &RunConfig) -> Result<Box<dyn Denoiser>> {
    config.check_inference_paths()?;
    Ok(match &config.denoiser {
        DenoiserConfig::Gmm(prior) => Box::new(prior.clone()),
        DenoiserConfig::Mlp { checkpoint } => {
            let file = File::open(checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?;
            let params = read_checkpoint(BufReader::new(file))
                .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
            Box::new(MlpDenoiser::new(params))
        }
    })
}

/// Shape of generated samples: the configured image size, or a vector for a
/// mixture prior whose dimension does not match it.
fn sample_shape(config: &RunConfig) -> Shape {
    let image = config.data.phantom.shape();
    match &config.denoiser {
        DenoiserConfig::Gmm(prior) if prior.dim() != image.len() => Shape::Vector(prior.dim()),
        _ => image,
    }
}

fn train_model(config: &RunConfig, out: Option<&Path>, workers: usize) -> Result<PathBuf> {
    let path = match (out, &config.denoiser) {
        (Some(p), _) => p.to_path_buf(),
        (None, DenoiserConfig::Mlp { checkpoint }) => checkpoint.clone(),
        (None, DenoiserConfig::Gmm(_)) => {
            bail!(invalid("denoiser.kind", "training needs --out or denoiser.kind = mlp"))
        }
    };
    let schedule = config.build_schedule()?;
    info!(
        "generating {} training phantoms ({}x{})",
        config.train_dataset_size, config.data.phantom.height, config.data.phantom.width
    );
    let data = phantom_images(
        config.train.seed,
        config.train_dataset_size,
        &config.data.phantom,
        workers,
    )?;
    let mut train_config = config.train.clone();
    train_config.workers = workers;
    info!("training for {} iterations", train_config.iterations);
    let trained = train(&data, &train_config, &schedule)?;
    if let Some(ratio) = trained.loss_ratio(100) {
        info!("final/initial loss ratio {ratio:.3}");
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_checkpoint(&trained.params, &mut w)?;
    w.flush()?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn sample_cmd(config: &RunConfig, out: &Path, workers: usize) -> Result<()> {
    let variant = config.sampler.variant;
    if variant.is_conditional() {
        bail!(invalid(
            "sampler.variant",
            "`sample` needs ddpm or ddim; use `inpaint` for RePaint variants"
        ));
    }
    let denoiser = load_denoiser(config)?;
    let schedule = config.build_schedule()?;
    let trajectory = config.build_trajectory()?;
    let run = SamplerRun::new(denoiser.as_ref(), &schedule, &trajectory, sample_shape(config));
    info!("drawing {} {variant} samples", config.sampler.count);
    let samples = sample_batch(&run, variant, config.sampler.count, config.sampler.seed, workers)?;
    std::fs::create_dir_all(out)?;
    for (i, s) in samples.iter().enumerate() {
        save_grid(out.join(format!("sample_{i:05}.difg")), s, Dtype::F64)?;
    }
    info!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn check_inpaint_variant(config: &RunConfig) -> Result<()> {
    if !config.sampler.variant.is_conditional() {
        bail!(invalid(
            "sampler.variant",
            "`inpaint` needs repaint-ddim or repaint-ddpm"
        ));
    }
    Ok(())
}

fn inpaint_file(config: &RunConfig, input: &Path, mask: &Path, out: &Path, hu: bool) -> Result<()> {
    check_inpaint_variant(config)?;
    let denoiser = load_denoiser(config)?;
    let (low, high) = (config.data.hu_low, config.data.hu_high);
    let mut known = load_grid(input).with_context(|| format!("reading {}", input.display()))?;
    if hu {
        known = Grid::new(
            known.shape(),
            known
                .as_slice()
                .iter()
                .map(|v| normalize_hu(*v, low, high))
                .collect::<fovdiff::Result<_>>()?,
        )?;
    }
    let mask = Mask::from_grid(load_grid(mask).with_context(|| format!("reading {}", mask.display()))?)?;
    let schedule = config.build_schedule()?;
    let trajectory = config.build_trajectory()?;

    let dump_every = config.output.dump_every;
    let dump_dir = out.with_extension("steps");
    if dump_every > 0 {
        std::fs::create_dir_all(&dump_dir)?;
    }
    let observer = |k: usize, t_prev: usize, x: &Grid| {
        if dump_every > 0 && (k + 1).is_multiple_of(dump_every) {
            let path = dump_dir.join(format!("step_{k:04}_t{t_prev:04}.difg"));
            if let Err(e) = save_grid(&path, x, Dtype::F64) {
                log::warn!("could not dump {}: {e}", path.display());
            }
        }
    };
    let run = SamplerRun::new(denoiser.as_ref(), &schedule, &trajectory, known.shape())
        .with_known(&known, &mask)
        .with_resample(config.sampler.resample)
        .with_eps_mode(config.sampler.eps_mode)
        .with_observer(&observer);
    info!(
        "{} over {} steps, U = {}",
        config.sampler.variant,
        trajectory.len(),
        config.sampler.resample
    );
    let mut completed = run_variant(
        &run,
        config.sampler.variant,
        &mut NoiseStream::new(config.sampler.seed, 0),
    )?;
    if hu {
        completed = Grid::new(
            completed.shape(),
            completed
                .as_slice()
                .iter()
                .map(|v| denormalize_hu(*v, low, high))
                .collect::<fovdiff::Result<_>>()?,
        )?;
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_grid(out, &completed, Dtype::F64)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn inpaint_dataset(config: &RunConfig, dataset: &Path, out: &Path, workers: usize) -> Result<()> {
    check_inpaint_variant(config)?;
    let denoiser = load_denoiser(config)?;
    let manifest = load_manifest(dataset).with_context(|| format!("reading manifest in {}", dataset.display()))?;
    let schedule = config.build_schedule()?;
    let trajectory = config.build_trajectory()?;
    std::fs::create_dir_all(out)?;
    let total = manifest.entries.len();
    info!(
        "completing {total} cases with {} ({} steps, U = {})",
        config.sampler.variant,
        trajectory.len(),
        config.sampler.resample
    );
    let results = map_indexed(total, workers, |i| -> fovdiff::Result<()> {
        let entry = &manifest.entries[i];
        let (known, mask) = load_inputs(dataset, &entry.id)?;
        let run = SamplerRun::new(denoiser.as_ref(), &schedule, &trajectory, known.shape())
            .with_known(&known, &mask)
            .with_resample(config.sampler.resample)
            .with_eps_mode(config.sampler.eps_mode);
        let mut noise = NoiseStream::new(config.sampler.seed, entry.stream);
        let completed = run_variant(&run, config.sampler.variant, &mut noise)?;
        save_grid(completed_path(out, &entry.id), &completed, Dtype::F64)?;
        info!("completed {} (TCI {:.3})", entry.id, entry.tci);
        Ok(())
    });
    for (entry, r) in manifest.entries.iter().zip(results) {
        r.with_context(|| format!("inpainting {}", entry.id))?;
    }
    info!("wrote {total} completions to {}", out.display());
    Ok(())
}

fn simulate(config: &RunConfig, out: &Path, workers: usize) -> Result<()> {
    let d = &config.data;
    info!("simulating {} cases into {}", d.count, out.display());
    let manifest = write_dataset(out, &d.split, d.seed, d.count, &d.phantom, &d.truncation, workers)?;
    let mean_tci = manifest.entries.iter().map(|e| e.tci).sum::<f64>() / manifest.entries.len() as f64;
    info!("mean TCI {mean_tci:.3}");
    Ok(())
}

fn evaluate(
    config: &RunConfig,
    dataset: &Path,
    completed: &Path,
    out: &Path,
    plot: bool,
    workers: usize,
) -> Result<()> {
    let (report, missing) = match evaluate_dataset(dataset, completed, &config.tci_edges, workers) {
        Err(Error::MissingSamples(ids)) => {
            bail!("no completions found in {} ({} cases)", completed.display(), ids.len())
        }
        other => other?,
    };
    save_report(out, &report)?;
    if plot {
        std::fs::write(out.join("plot.svg"), render_error_plot(&report))?;
    }
    println!("{}", serde_json::to_string(&report.overall)?);
    info!("wrote report to {}", out.display());
    if !missing.is_empty() {
        return Err(Error::MissingSamples(missing).into());
    }
    Ok(())
}

fn benchmark(config: &RunConfig, train_first: bool, workers: usize) -> Result<()> {
    let root = &config.output.dir;
    let data = split_dir(config);
    simulate(config, &data, workers)?;
    let mut config = config.clone();
    if train_first {
        let path = train_model(&config, None, workers)?;
        config.denoiser = DenoiserConfig::Mlp { checkpoint: path };
    }
    let completed = root.join("completed");
    inpaint_dataset(&config, &data, &completed, workers)?;
    evaluate(&config, &data, &completed, &root.join("report"), true, workers)
}
