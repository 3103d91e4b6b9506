//! Simulated truncation datasets on disk.
//!
//! A split directory holds `manifest.json` and, per case `<id>`, the files
//! `<id>_image.difg`, `<id>_labels.difg`, `<id>_mask.difg` and
//! `<id>_truncated.difg`. Completions produced by an inpainting run live in a
//! separate directory as `<id>.difg`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fov::{
    apply_truncation, generate_phantom, sample_truncation, Mask, Phantom, PhantomConfig, PhantomGeometry, Truncation,
    TruncationConfig,
};
use crate::grid::Grid;
use crate::io::gridfile::{load_grid, save_grid, Dtype};
use crate::metrics::{sat_area, AgreementReport, SampleRecord};
use crate::parallel::map_indexed;
use crate::rng::stream_rng;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Random stream index of this case under the manifest seed.
    pub stream: u64,
    pub geometry: PhantomGeometry,
    pub fov_center: (f64, f64),
    pub fov_radius: f64,
    pub tci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: String,
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub truncation: TruncationConfig,
    pub entries: Vec<ManifestEntry>,
}

/// One simulated case held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: String,
    pub phantom: Phantom,
    pub truncation: Truncation,
    pub truncated: Grid,
}

pub fn case_id(index: usize) -> String {
    format!("s{index:05}")
}

/// Case `index` of the dataset with the given seed. Each case has its own
/// random stream, so cases can be generated in any order.
pub fn simulate_case(seed: u64, index: usize, phantom: &PhantomConfig, truncation: &TruncationConfig) -> Result<Case> {
    let mut rng = stream_rng(seed, index as u64);
    let ph = generate_phantom(&mut rng, phantom)?;
    let tr = sample_truncation(&mut rng, &ph.labels, truncation)?;
    let truncated = apply_truncation(&ph.image, &tr.mask, truncation.fill)?;
    Ok(Case {
        id: case_id(index),
        phantom: ph,
        truncation: tr,
        truncated,
    })
}

pub fn simulate_cases(
    seed: u64,
    count: usize,
    phantom: &PhantomConfig,
    truncation: &TruncationConfig,
    workers: usize,
) -> Result<Vec<Case>> {
    map_indexed(count, workers, |i| simulate_case(seed, i, phantom, truncation))
        .into_iter()
        .collect()
}

/// First random stream used by [`phantom_images`], far above any case index.
pub const TRAINING_STREAM_BASE: u64 = 1 << 32;

/// Untruncated phantom images for training. They use streams disjoint from
/// [`simulate_case`], so a training set never repeats an evaluation case.
pub fn phantom_images(seed: u64, count: usize, phantom: &PhantomConfig, workers: usize) -> Result<Vec<Grid>> {
    map_indexed(count, workers, |i| {
        generate_phantom(&mut stream_rng(seed, TRAINING_STREAM_BASE + i as u64), phantom).map(|p| p.image)
    })
    .into_iter()
    .collect()
}

fn case_path(dir: &Path, id: &str, part: &str) -> PathBuf {
    dir.join(format!("{id}_{part}.difg"))
}

pub fn completed_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.difg"))
}

/// Simulates `count` cases and writes them, with a manifest, into `dir`.
pub fn write_dataset(
    dir: &Path,
    split: &str,
    seed: u64,
    count: usize,
    phantom: &PhantomConfig,
    truncation: &TruncationConfig,
    workers: usize,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let entries = map_indexed(count, workers, |i| -> Result<ManifestEntry> {
        let case = simulate_case(seed, i, phantom, truncation)?;
        save_grid(case_path(dir, &case.id, "image"), &case.phantom.image, Dtype::F64)?;
        save_grid(case_path(dir, &case.id, "labels"), &case.phantom.labels, Dtype::F32)?;
        save_grid(
            case_path(dir, &case.id, "mask"),
            case.truncation.mask.as_grid(),
            Dtype::F32,
        )?;
        save_grid(case_path(dir, &case.id, "truncated"), &case.truncated, Dtype::F64)?;
        Ok(ManifestEntry {
            id: case.id,
            stream: i as u64,
            geometry: case.phantom.geometry,
            fov_center: case.truncation.center,
            fov_radius: case.truncation.radius,
            tci: case.truncation.tci,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        split: split.to_string(),
        seed,
        phantom: phantom.clone(),
        truncation: truncation.clone(),
        entries,
    };
    let file = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(file, &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let file = BufReader::new(File::open(dir.join(MANIFEST_FILE))?);
    Ok(serde_json::from_reader(file)?)
}

/// Truncated image and known-pixel mask of one case.
pub fn load_inputs(dir: &Path, id: &str) -> Result<(Grid, Mask)> {
    let truncated = load_grid(case_path(dir, id, "truncated"))?;
    let mask = Mask::from_grid(load_grid(case_path(dir, id, "mask"))?)?;
    truncated.ensure_same_shape(mask.as_grid())?;
    Ok((truncated, mask))
}

pub fn load_image(dir: &Path, id: &str) -> Result<Grid> {
    load_grid(case_path(dir, id, "image"))
}

/// SAT agreement for one case.
pub fn case_record(
    id: &str,
    tci: f64,
    truth: &Grid,
    truncated: &Grid,
    completed: &Grid,
    band: (f64, f64),
) -> Result<SampleRecord> {
    truth.ensure_same_shape(completed)?;
    Ok(SampleRecord {
        id: id.to_string(),
        tci,
        sat_true: sat_area(truth, band)?,
        sat_truncated: sat_area(truncated, band)?,
        sat_completed: sat_area(completed, band)?,
    })
}

/// Scores completions in `completed_dir` against the split in `split_dir`.
///
/// Cases without a completion are left out of the report and returned by id.
pub fn evaluate_dataset(
    split_dir: &Path,
    completed_dir: &Path,
    edges: &[f64],
    workers: usize,
) -> Result<(AgreementReport, Vec<String>)> {
    let manifest = load_manifest(split_dir)?;
    let band = manifest.phantom.fat_band;
    let results = map_indexed(manifest.entries.len(), workers, |i| -> Result<Option<SampleRecord>> {
        let entry = &manifest.entries[i];
        let path = completed_path(completed_dir, &entry.id);
        if !path.is_file() {
            return Ok(None);
        }
        let completed = load_grid(path)?;
        let truth = load_image(split_dir, &entry.id)?;
        let (truncated, _) = load_inputs(split_dir, &entry.id)?;
        case_record(&entry.id, entry.tci, &truth, &truncated, &completed, band).map(Some)
    });
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for (entry, r) in manifest.entries.iter().zip(results) {
        match r? {
            Some(rec) => records.push(rec),
            None => missing.push(entry.id.clone()),
        }
    }
    if records.is_empty() {
        return Err(Error::MissingSamples(missing));
    }
    Ok((AgreementReport::build(records, edges)?, missing))
}
