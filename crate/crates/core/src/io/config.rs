//! Run configuration in a flat `section.key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Array values use
//! JSON syntax (`[1, 2]`, `[[0.0], [1.0]]`). Every key is optional and
//! unknown or repeated keys are errors, so a misspelling never silently
//! falls back to a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;

use crate::denoiser::GaussianMixture;
use crate::error::{Error, Result};
use crate::fov::{PhantomConfig, TruncationConfig};
use crate::io::hu::{DEFAULT_HU_HIGH, DEFAULT_HU_LOW};
use crate::metrics::DEFAULT_TCI_EDGES;
use crate::samplers::{EpsMode, Variant};
use crate::schedule::{DiffusionSchedule, ScheduleParams, Trajectory};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub variant: Variant,
    pub n_steps: usize,
    pub resample: usize,
    pub seed: u64,
    pub eps_mode: EpsMode,
    /// Number of unconditional samples drawn by `sample`.
    pub count: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::RepaintDdim,
            n_steps: 50,
            resample: 20,
            seed: 0,
            eps_mode: EpsMode::Reuse,
            count: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserConfig {
    Gmm(GaussianMixture),
    Mlp { checkpoint: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub phantom: PhantomConfig,
    pub truncation: TruncationConfig,
    pub count: usize,
    pub seed: u64,
    pub split: String,
    pub hu_low: f64,
    pub hu_high: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomConfig::default(),
            truncation: TruncationConfig::default(),
            count: 50,
            seed: 0,
            split: "test".into(),
            hu_low: DEFAULT_HU_LOW,
            hu_high: DEFAULT_HU_HIGH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Dump the sampler state every k-th outer step; 0 disables dumping.
    pub dump_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schedule: ScheduleParams,
    pub sampler: SamplerConfig,
    pub denoiser: DenoiserConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Phantoms generated for training.
    pub train_dataset_size: usize,
    pub tci_edges: Vec<f64>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_base(Path::new("."))
    }
}

const KEYS: &[&str] = &[
    "schedule.T",
    "schedule.beta_start",
    "schedule.beta_end",
    "sampler.variant",
    "sampler.n_steps",
    "sampler.U",
    "sampler.seed",
    "sampler.eps_mode",
    "sampler.count",
    "denoiser.kind",
    "denoiser.checkpoint",
    "denoiser.gmm.weights",
    "denoiser.gmm.means",
    "denoiser.gmm.variances",
    "data.height",
    "data.width",
    "data.count",
    "data.seed",
    "data.split",
    "data.hu_low",
    "data.hu_high",
    "data.phantom.semi_axis_min",
    "data.phantom.semi_axis_max",
    "data.phantom.center_jitter",
    "data.phantom.fat_thickness_min",
    "data.phantom.fat_thickness_max",
    "data.phantom.background",
    "data.phantom.fat_band",
    "data.phantom.soft_band",
    "data.phantom.band_inset",
    "data.phantom.texture_sigma",
    "data.truncation.radius_min",
    "data.truncation.radius_max",
    "data.truncation.center_jitter",
    "data.truncation.fill",
    "data.truncation.tci_min",
    "data.truncation.tci_max",
    "data.truncation.max_attempts",
    "train.learning_rate",
    "train.batch_size",
    "train.iterations",
    "train.seed",
    "train.embed_dim",
    "train.hidden",
    "train.log_every",
    "train.dataset_size",
    "eval.tci_edges",
    "output.dir",
    "output.dump_every",
];

struct Entries {
    values: BTreeMap<String, (usize, String)>,
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        message: message.into(),
    }
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("unknown key `{key}`"),
                });
            }
            if value.is_empty() {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("missing value for `{key}`"),
                });
            }
            if let Some((first, _)) = values.insert(key.to_string(), (line_no, value.to_string())) {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("`{key}` already set on line {first}"),
                });
            }
        }
        Ok(Self { values })
    }

    fn scalar<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((line, v)) = self.values.get(key) {
            let v = v.trim_matches('"');
            *slot = v
                .parse()
                .map_err(|e| invalid(key, format!("cannot parse `{v}` (line {line}): {e}")))?;
        }
        Ok(())
    }

    fn json<T: DeserializeOwned>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some((line, v)) = self.values.get(key) {
            *slot = serde_json::from_str(v).map_err(|e| invalid(key, format!("line {line}: {e}")))?;
        }
        Ok(())
    }

    fn pair(&self, key: &str, slot: &mut (f64, f64)) -> Result<()> {
        let mut arr = [slot.0, slot.1];
        self.json(key, &mut arr)?;
        *slot = (arr[0], arr[1]);
        Ok(())
    }
}

fn positive(key: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(invalid(key, "must be at least 1"));
    }
    Ok(())
}

impl RunConfig {
    /// Defaults with relative paths resolved against `base`.
    pub fn with_base(base: &Path) -> Self {
        Self {
            schedule: ScheduleParams::default(),
            sampler: SamplerConfig::default(),
            denoiser: DenoiserConfig::Mlp {
                checkpoint: base.join("model.rpdm"),
            },
            data: DataConfig::default(),
            train: TrainConfig::default(),
            train_dataset_size: 2000,
            tci_edges: DEFAULT_TCI_EDGES.to_vec(),
            output: OutputConfig {
                dir: base.join("out"),
                dump_every: 0,
            },
        }
    }

    pub fn build_schedule(&self) -> Result<DiffusionSchedule> {
        self.schedule.build()
    }

    pub fn build_trajectory(&self) -> Result<Trajectory> {
        if self.sampler.variant.needs_consecutive() {
            Trajectory::full(self.schedule.steps)
        } else {
            Trajectory::uniform(self.schedule.steps, self.sampler.n_steps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        positive("schedule.T", s.steps)?;
        if !(s.beta_start > 0.0 && s.beta_start < 1.0) {
            return Err(invalid("schedule.beta_start", "must lie in (0, 1)"));
        }
        if !(s.beta_end >= s.beta_start && s.beta_end < 1.0) {
            return Err(invalid("schedule.beta_end", "must lie in [beta_start, 1)"));
        }
        positive("sampler.n_steps", self.sampler.n_steps)?;
        if self.sampler.n_steps > s.steps {
            return Err(invalid("sampler.n_steps", format!("exceeds schedule.T = {}", s.steps)));
        }
        positive("sampler.U", self.sampler.resample)?;
        positive("sampler.count", self.sampler.count)?;
        positive("data.count", self.data.count)?;
        if self.data.split.is_empty() || self.data.split.contains(['/', '\\']) {
            return Err(invalid("data.split", "must be a plain directory name"));
        }
        if !(self.data.hu_low < self.data.hu_high) {
            return Err(invalid("data.hu_high", "must exceed data.hu_low"));
        }
        self.data
            .phantom
            .validate()
            .map_err(|e| invalid("data.phantom", e.to_string()))?;
        let tr = &self.data.truncation;
        if !(tr.radius.0 > 0.0 && tr.radius.0 <= tr.radius.1) {
            return Err(invalid(
                "data.truncation.radius_max",
                "need 0 < radius_min <= radius_max",
            ));
        }
        if tr.center_jitter < 0.0 {
            return Err(invalid("data.truncation.center_jitter", "must be non-negative"));
        }
        if !(0.0 <= tr.tci_range.0 && tr.tci_range.0 <= tr.tci_range.1 && tr.tci_range.1 <= 1.0) {
            return Err(invalid("data.truncation.tci_max", "need 0 <= tci_min <= tci_max <= 1"));
        }
        positive("data.truncation.max_attempts", tr.max_attempts)?;
        self.train.validate().map_err(|e| invalid("train", e.to_string()))?;
        positive("train.iterations", self.train.iterations)?;
        positive("train.dataset_size", self.train_dataset_size)?;
        let e = &self.tci_edges;
        if e.len() < 2 || e[0] != 0.0 || e[e.len() - 1] != 1.0 || e.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("eval.tci_edges", "must increase strictly from 0 to 1"));
        }
        Ok(())
    }

    /// Checks that inputs needed for sampling exist on disk.
    pub fn check_inference_paths(&self) -> Result<()> {
        if let DenoiserConfig::Mlp { checkpoint } = &self.denoiser {
            if !checkpoint.is_file() {
                return Err(invalid(
                    "denoiser.checkpoint",
                    format!("{} does not exist", checkpoint.display()),
                ));
            }
        }
        Ok(())
    }
}

/// Parses configuration text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let e = Entries::parse(text)?;
    let mut c = RunConfig::with_base(base);

    e.scalar("schedule.T", &mut c.schedule.steps)?;
    e.scalar("schedule.beta_start", &mut c.schedule.beta_start)?;
    e.scalar("schedule.beta_end", &mut c.schedule.beta_end)?;

    let mut variant = c.sampler.variant.to_string();
    e.scalar("sampler.variant", &mut variant)?;
    c.sampler.variant = variant.parse().map_err(|m: String| invalid("sampler.variant", m))?;
    e.scalar("sampler.n_steps", &mut c.sampler.n_steps)?;
    e.scalar("sampler.U", &mut c.sampler.resample)?;
    e.scalar("sampler.seed", &mut c.sampler.seed)?;
    let mut mode = String::from("reuse");
    e.scalar("sampler.eps_mode", &mut mode)?;
    c.sampler.eps_mode = mode.parse().map_err(|m: String| invalid("sampler.eps_mode", m))?;
    e.scalar("sampler.count", &mut c.sampler.count)?;

    let mut kind = String::from("mlp");
    e.scalar("denoiser.kind", &mut kind)?;
    let gmm_keys = ["denoiser.gmm.weights", "denoiser.gmm.means", "denoiser.gmm.variances"];
    c.denoiser = match kind.as_str() {
        "mlp" => {
            if let Some(k) = gmm_keys.iter().find(|k| e.values.contains_key(**k)) {
                return Err(invalid(k, "only valid with denoiser.kind = gmm"));
            }
            let mut path = String::from("model.rpdm");
            e.scalar("denoiser.checkpoint", &mut path)?;
            DenoiserConfig::Mlp {
                checkpoint: base.join(path),
            }
        }
        "gmm" => {
            if e.values.contains_key("denoiser.checkpoint") {
                return Err(invalid("denoiser.checkpoint", "only valid with denoiser.kind = mlp"));
            }
            let mut weights = vec![1.0];
            let mut means = vec![vec![0.0]];
            let mut variances = vec![vec![1.0]];
            e.json(gmm_keys[0], &mut weights)?;
            e.json(gmm_keys[1], &mut means)?;
            e.json(gmm_keys[2], &mut variances)?;
            DenoiserConfig::Gmm(
                GaussianMixture::new(weights, means, variances)
                    .map_err(|err| invalid("denoiser.gmm", err.to_string()))?,
            )
        }
        other => return Err(invalid("denoiser.kind", format!("`{other}` is not gmm or mlp"))),
    };

    let d = &mut c.data;
    e.scalar("data.height", &mut d.phantom.height)?;
    e.scalar("data.width", &mut d.phantom.width)?;
    e.scalar("data.count", &mut d.count)?;
    e.scalar("data.seed", &mut d.seed)?;
    e.scalar("data.split", &mut d.split)?;
    e.scalar("data.hu_low", &mut d.hu_low)?;
    e.scalar("data.hu_high", &mut d.hu_high)?;
    let p = &mut d.phantom;
    e.scalar("data.phantom.semi_axis_min", &mut p.semi_axis.0)?;
    e.scalar("data.phantom.semi_axis_max", &mut p.semi_axis.1)?;
    e.scalar("data.phantom.center_jitter", &mut p.center_jitter)?;
    e.scalar("data.phantom.fat_thickness_min", &mut p.fat_thickness.0)?;
    e.scalar("data.phantom.fat_thickness_max", &mut p.fat_thickness.1)?;
    e.scalar("data.phantom.background", &mut p.background)?;
    e.pair("data.phantom.fat_band", &mut p.fat_band)?;
    e.pair("data.phantom.soft_band", &mut p.soft_band)?;
    e.scalar("data.phantom.band_inset", &mut p.band_inset)?;
    e.scalar("data.phantom.texture_sigma", &mut p.texture_sigma)?;
    let t = &mut d.truncation;
    e.scalar("data.truncation.radius_min", &mut t.radius.0)?;
    e.scalar("data.truncation.radius_max", &mut t.radius.1)?;
    e.scalar("data.truncation.center_jitter", &mut t.center_jitter)?;
    e.scalar("data.truncation.fill", &mut t.fill)?;
    e.scalar("data.truncation.tci_min", &mut t.tci_range.0)?;
    e.scalar("data.truncation.tci_max", &mut t.tci_range.1)?;
    e.scalar("data.truncation.max_attempts", &mut t.max_attempts)?;

    let tr = &mut c.train;
    e.scalar("train.learning_rate", &mut tr.learning_rate)?;
    e.scalar("train.batch_size", &mut tr.batch_size)?;
    e.scalar("train.iterations", &mut tr.iterations)?;
    e.scalar("train.seed", &mut tr.seed)?;
    e.scalar("train.embed_dim", &mut tr.embed_dim)?;
    e.json("train.hidden", &mut tr.hidden)?;
    e.scalar("train.log_every", &mut tr.log_every)?;
    e.scalar("train.dataset_size", &mut c.train_dataset_size)?;

    e.json("eval.tci_edges", &mut c.tci_edges)?;

    let mut dir: Option<String> = None;
    if let Some((_, v)) = e.values.get("output.dir") {
        dir = Some(v.trim_matches('"').to_string());
    }
    if let Some(dir) = dir {
        c.output.dir = base.join(dir);
    }
    e.scalar("output.dump_every", &mut c.output.dump_every)?;

    c.validate()?;
    Ok(c)
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}
