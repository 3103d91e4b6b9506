//! Synthetic body phantoms, circular field-of-view masks and truncation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};

pub const LABEL_BACKGROUND: f64 = 0.0;
pub const LABEL_BODY: f64 = 1.0;
pub const LABEL_FAT: f64 = 2.0;

/// Binary mask: 1 = inside the field of view (known), 0 = truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask(Grid);

impl Mask {
    pub fn from_grid(grid: Grid) -> Result<Self> {
        if let Some(v) = grid.as_slice().iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::InvalidRange(format!("mask value {v} is not 0 or 1")));
        }
        Ok(Self(grid))
    }

    pub fn ones(shape: Shape) -> Self {
        Self(Grid::filled(shape, 1.0))
    }

    pub fn zeros(shape: Shape) -> Self {
        Self(Grid::zeros(shape))
    }

    pub fn from_fn(shape: Shape, mut known: impl FnMut(usize) -> bool) -> Self {
        Self(Grid::from_fn(shape, |i| if known(i) { 1.0 } else { 0.0 }))
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn is_known(&self, i: usize) -> bool {
        self.0.as_slice()[i] == 1.0
    }

    pub fn known_count(&self) -> usize {
        self.0.as_slice().iter().filter(|v| **v == 1.0).count()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.map(|v| 1.0 - v))
    }

    /// Overwrites `target` with `source` wherever the mask is 1.
    pub fn paste(&self, source: &Grid, target: &mut Grid) -> Result<()> {
        self.0.ensure_same_shape(source)?;
        self.0.ensure_same_shape(target)?;
        for ((t, s), m) in target
            .as_mut_slice()
            .iter_mut()
            .zip(source.as_slice())
            .zip(self.0.as_slice())
        {
            if *m == 1.0 {
                *t = *s;
            }
        }
        Ok(())
    }
}

/// Pixels whose centre lies within `radius` of `center` (row, col).
pub fn circular_fov_mask(height: usize, width: usize, center: (f64, f64), radius: f64) -> Result<Mask> {
    if !(radius > 0.0) {
        return Err(Error::InvalidRange(format!("radius must be positive, got {radius}")));
    }
    let r2 = radius * radius;
    Ok(Mask::from_fn(Shape::image(height, width), |i| {
        let dy = (i / width) as f64 - center.0;
        let dx = (i % width) as f64 - center.1;
        dy * dy + dx * dx <= r2
    }))
}

/// `m * image + (1 - m) * fill`.
pub fn apply_truncation(image: &Grid, mask: &Mask, fill: f64) -> Result<Grid> {
    let mut out = Grid::filled(image.shape(), fill);
    mask.paste(image, &mut out)?;
    Ok(out)
}

/// Fraction of tissue (body or fat) pixels outside the field of view.
pub fn tci(labels: &Grid, mask: &Mask) -> Result<f64> {
    labels.ensure_same_shape(mask.as_grid())?;
    let (mut tissue, mut outside) = (0usize, 0usize);
    for (i, l) in labels.as_slice().iter().enumerate() {
        if *l != LABEL_BACKGROUND {
            tissue += 1;
            if !mask.is_known(i) {
                outside += 1;
            }
        }
    }
    if tissue == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(outside as f64 / tissue as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    /// Semi-axis range as a fraction of the matching grid dimension.
    pub semi_axis: (f64, f64),
    /// Maximum centre offset as a fraction of each dimension.
    pub center_jitter: f64,
    /// Fat ring thickness range in pixels.
    pub fat_thickness: (f64, f64),
    pub background: f64,
    pub fat_band: (f64, f64),
    pub soft_band: (f64, f64),
    /// Base intensities are drawn from the middle of each band, leaving this
    /// fraction of the band width free on each side for texture noise.
    pub band_inset: f64,
    pub texture_sigma: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            semi_axis: (0.30, 0.42),
            center_jitter: 0.05,
            fat_thickness: (1.5, 2.8),
            background: -1.0,
            fat_band: (-0.3, -0.1),
            soft_band: (0.0, 0.2),
            band_inset: 0.25,
            texture_sigma: 0.01,
        }
    }
}

impl PhantomConfig {
    /// Settings scaled for 16x16 grids.
    pub fn small() -> Self {
        Self {
            height: 16,
            width: 16,
            semi_axis: (0.28, 0.38),
            center_jitter: 0.04,
            fat_thickness: (1.0, 1.6),
            ..Self::default()
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::image(self.height, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.semi_axis;
        if !(lo > 0.0 && lo <= hi) || self.center_jitter < 0.0 {
            return Err(Error::Infeasible(format!("semi-axis range {lo}..{hi}")));
        }
        for dim in [self.height, self.width] {
            let reach = (hi + self.center_jitter) * dim as f64 + 1.0;
            if reach > dim as f64 / 2.0 {
                return Err(Error::Infeasible(format!(
                    "body ellipse reaches {reach:.2} px from centre but a {dim}-px grid allows {}",
                    dim as f64 / 2.0
                )));
            }
        }
        let (tlo, thi) = self.fat_thickness;
        if !(tlo >= 0.0 && tlo <= thi) || thi >= lo * self.height.min(self.width) as f64 {
            return Err(Error::Infeasible(format!("fat thickness range {tlo}..{thi}")));
        }
        let bands = [self.fat_band, self.soft_band];
        if bands.iter().any(|(a, b)| !(a < b)) || !(self.fat_band.1 < self.soft_band.0) {
            return Err(Error::Infeasible(
                "fat and soft-tissue bands must be ordered and disjoint".into(),
            ));
        }
        if !(self.background < self.fat_band.0) {
            return Err(Error::Infeasible("background must lie below the fat band".into()));
        }
        if !(0.0..0.5).contains(&self.band_inset) || self.texture_sigma < 0.0 {
            return Err(Error::Infeasible("band inset or texture sigma out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomGeometry {
    /// (row, col)
    pub center: (f64, f64),
    /// (row semi-axis, col semi-axis)
    pub semi_axes: (f64, f64),
    pub fat_thickness: f64,
    pub fat_intensity: f64,
    pub soft_intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    /// Normalized intensities in [-1, 1].
    pub image: Grid,
    /// 0 background, 1 body, 2 fat.
    pub labels: Grid,
    pub geometry: PhantomGeometry,
}

fn inside(dy: f64, dx: f64, ry: f64, rx: f64) -> bool {
    ry > 0.0 && rx > 0.0 && (dy / ry).powi(2) + (dx / rx).powi(2) <= 1.0
}

fn band_draw<R: Rng>(rng: &mut R, band: (f64, f64), inset: f64) -> f64 {
    let w = band.1 - band.0;
    let (lo, hi) = (band.0 + inset * w, band.1 - inset * w);
    if lo < hi {
        rng.gen_range(lo..hi)
    } else {
        0.5 * (band.0 + band.1)
    }
}

/// Random elliptical body with a subcutaneous fat ring of random thickness.
pub fn generate_phantom<R: Rng>(rng: &mut R, config: &PhantomConfig) -> Result<Phantom> {
    config.validate()?;
    let (h, w) = (config.height as f64, config.width as f64);
    let jitter = |rng: &mut R, dim: f64| {
        let j = config.center_jitter * dim;
        if j > 0.0 {
            rng.gen_range(-j..=j)
        } else {
            0.0
        }
    };
    let center = ((h - 1.0) / 2.0 + jitter(rng, h), (w - 1.0) / 2.0 + jitter(rng, w));
    let (lo, hi) = config.semi_axis;
    let semi_axes = (rng.gen_range(lo..=hi) * h, rng.gen_range(lo..=hi) * w);
    let (tlo, thi) = config.fat_thickness;
    let fat_thickness = if tlo < thi { rng.gen_range(tlo..thi) } else { tlo };
    let fat_intensity = band_draw(rng, config.fat_band, config.band_inset);
    let soft_intensity = band_draw(rng, config.soft_band, config.band_inset);
    debug_assert!(fat_intensity >= config.fat_band.0 && fat_intensity <= config.fat_band.1);

    let shape = config.shape();
    let mut labels = Grid::zeros(shape);
    let mut image = Grid::filled(shape, config.background);
    for row in 0..config.height {
        for col in 0..config.width {
            let dy = row as f64 - center.0;
            let dx = col as f64 - center.1;
            if !inside(dy, dx, semi_axes.0, semi_axes.1) {
                continue;
            }
            let soft = inside(dy, dx, semi_axes.0 - fat_thickness, semi_axes.1 - fat_thickness);
            let (label, base) = if soft {
                (LABEL_BODY, soft_intensity)
            } else {
                (LABEL_FAT, fat_intensity)
            };
            let noise: f64 = rng.sample(StandardNormal);
            labels.set(row, col, label);
            image.set(row, col, base + config.texture_sigma * noise);
        }
    }
    Ok(Phantom {
        image,
        labels,
        geometry: PhantomGeometry {
            center,
            semi_axes,
            fat_thickness,
            fat_intensity,
            soft_intensity,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    /// FOV radius range as a fraction of the image width.
    pub radius: (f64, f64),
    /// Maximum FOV centre offset as a fraction of the image width.
    pub center_jitter: f64,
    pub fill: f64,
    /// Accepted TCI interval; draws outside it are rejected.
    pub tci_range: (f64, f64),
    pub max_attempts: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            radius: (0.28, 0.45),
            center_jitter: 0.15,
            fill: -1.0,
            tci_range: (0.0, 1.0),
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub mask: Mask,
    pub center: (f64, f64),
    pub radius: f64,
    pub tci: f64,
}

/// Random circular FOV around the image centre, redrawn until its TCI falls
/// in `config.tci_range`.
pub fn sample_truncation<R: Rng>(rng: &mut R, labels: &Grid, config: &TruncationConfig) -> Result<Truncation> {
    let (h, w) = labels.hw();
    let (rlo, rhi) = config.radius;
    if !(rlo > 0.0 && rlo <= rhi) || config.center_jitter < 0.0 {
        return Err(Error::Infeasible(format!("radius range {rlo}..{rhi}")));
    }
    let (tlo, thi) = config.tci_range;
    let wf = w as f64;
    for _ in 0..config.max_attempts.max(1) {
        let j = config.center_jitter * wf;
        let (oy, ox) = if j > 0.0 {
            (rng.gen_range(-j..=j), rng.gen_range(-j..=j))
        } else {
            (0.0, 0.0)
        };
        let center = ((h as f64 - 1.0) / 2.0 + oy, (wf - 1.0) / 2.0 + ox);
        let radius = rng.gen_range(rlo..=rhi) * wf;
        let mask = circular_fov_mask(h, w, center, radius)?;
        let index = tci(labels, &mask)?;
        if index >= tlo && index <= thi {
            return Ok(Truncation {
                mask,
                center,
                radius,
                tci: index,
            });
        }
    }
    Err(Error::Infeasible(format!(
        "no truncation with TCI in [{tlo}, {thi}] after {} attempts",
        config.max_attempts
    )))
}
