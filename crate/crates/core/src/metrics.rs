//! Measurement surrogates and statistical summaries.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fov::Mask;
use crate::grid::Grid;

pub const DEFAULT_TCI_EDGES: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 1.0];

/// Subcutaneous-fat area surrogate.
///
/// Counts pixels with intensity in `band` that are 4-connected, through
/// in-band pixels, to the outer boundary of the body. Body pixels are those
/// brighter than the midpoint between air (-1) and the lower band edge.
pub fn sat_area(image: &Grid, band: (f64, f64)) -> Result<f64> {
    sat_area_with(image, band, 0.5 * (-1.0 + band.0))
}

pub fn sat_area_with(image: &Grid, band: (f64, f64), body_threshold: f64) -> Result<f64> {
    if !(band.0 < band.1) {
        return Err(Error::InvalidRange(format!("band [{}, {}] is empty", band.0, band.1)));
    }
    let (h, w) = image.hw();
    let v = image.as_slice();
    let body: Vec<bool> = v.iter().map(|x| *x > body_threshold).collect();
    let in_band: Vec<bool> = v.iter().map(|x| *x >= band.0 && *x <= band.1).collect();
    let neighbours = |i: usize| {
        let (r, c) = (i / w, i % w);
        [
            (r > 0).then(|| i - w),
            (r + 1 < h).then(|| i + w),
            (c > 0).then(|| i - 1),
            (c + 1 < w).then(|| i + 1),
        ]
    };

    let mut seen = vec![false; v.len()];
    let mut queue = VecDeque::new();
    for i in 0..v.len() {
        if !(body[i] && in_band[i]) {
            continue;
        }
        let on_boundary = neighbours(i).iter().any(|n| n.is_none_or(|j| !body[j]));
        if on_boundary {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    let mut count = 0usize;
    while let Some(i) = queue.pop_front() {
        count += 1;
        for j in neighbours(i).into_iter().flatten() {
            if !seen[j] && in_band[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    Ok(count as f64)
}

/// Root-mean-square and mean absolute difference over `region`.
pub fn region_error(a: &Grid, b: &Grid, region: &Mask) -> Result<(f64, f64)> {
    a.ensure_same_shape(b)?;
    a.ensure_same_shape(region.as_grid())?;
    let (mut sq, mut abs, mut n) = (0.0, 0.0, 0usize);
    for (i, (x, y)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
        if region.is_known(i) {
            let d = x - y;
            sq += d * d;
            abs += d.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(((sq / n as f64).sqrt(), abs / n as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Grid,
    /// Unbiased per-element variance.
    pub variance: Grid,
    /// Full unbiased covariance, for two-element samples only.
    pub covariance: Option<[[f64; 2]; 2]>,
}

pub fn sample_moments(samples: &[Grid]) -> Result<Moments> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let shape = samples[0].shape();
    if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
        return Err(Error::shape(shape, bad.shape()));
    }
    let n = samples.len() as f64;
    let mut mean = Grid::zeros(shape);
    for s in samples {
        for (m, x) in mean.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *m += x;
        }
    }
    mean.as_mut_slice().iter_mut().for_each(|m| *m /= n);

    let mut variance = Grid::zeros(shape);
    let mut cross = 0.0;
    for s in samples {
        let x = s.as_slice();
        for ((v, xi), m) in variance.as_mut_slice().iter_mut().zip(x).zip(mean.as_slice()) {
            *v += (xi - m) * (xi - m);
        }
        if x.len() == 2 {
            cross += (x[0] - mean.as_slice()[0]) * (x[1] - mean.as_slice()[1]);
        }
    }
    variance.as_mut_slice().iter_mut().for_each(|v| *v /= n - 1.0);
    let covariance = (shape.len() == 2).then(|| {
        let v = variance.as_slice();
        let c = cross / (n - 1.0);
        [[v[0], c], [c, v[1]]]
    });
    Ok(Moments {
        mean,
        variance,
        covariance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub tci: f64,
    pub sat_true: f64,
    pub sat_truncated: f64,
    pub sat_completed: f64,
}

/// Error aggregates against the untruncated measurement. Means are `None`
/// when no sample falls in the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub truncated_mae: Option<f64>,
    pub truncated_mean_error: Option<f64>,
    pub completed_mae: Option<f64>,
    pub completed_mean_error: Option<f64>,
}

impl ErrorStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a SampleRecord>) -> Self {
        let (mut n, mut ta, mut ts, mut ca, mut cs) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for r in records {
            let dt = r.sat_truncated - r.sat_true;
            let dc = r.sat_completed - r.sat_true;
            n += 1;
            ta += dt.abs();
            ts += dt;
            ca += dc.abs();
            cs += dc;
        }
        let mean = |s: f64| (n > 0).then(|| s / n as f64);
        Self {
            count: n,
            truncated_mae: mean(ta),
            truncated_mean_error: mean(ts),
            completed_mae: mean(ca),
            completed_mean_error: mean(cs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lower: f64,
    pub upper: f64,
    #[serde(flatten)]
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub bin_edges: Vec<f64>,
    pub overall: ErrorStats,
    pub bins: Vec<BinStats>,
    /// Sorted by id.
    pub records: Vec<SampleRecord>,
}

/// Index of the TCI bin holding `tci`; the last bin is closed on the right.
pub fn bin_index(edges: &[f64], tci: f64) -> Option<usize> {
    let last = edges.len().checked_sub(2)?;
    (0..=last).find(|&b| tci >= edges[b] && (tci < edges[b + 1] || (b == last && tci <= edges[b + 1])))
}

impl AgreementReport {
    pub fn build(mut records: Vec<SampleRecord>, edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 || edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidRange(format!(
                "TCI bin edges must increase strictly from 0 to 1, got {edges:?}"
            )));
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidRange(format!("duplicate sample id `{}`", w[0].id)));
        }
        if let Some(r) = records.iter().find(|r| bin_index(edges, r.tci).is_none()) {
            return Err(Error::InvalidRange(format!(
                "sample `{}` has TCI {} outside [0, 1]",
                r.id, r.tci
            )));
        }
        let bins = edges
            .windows(2)
            .enumerate()
            .map(|(b, e)| BinStats {
                lower: e[0],
                upper: e[1],
                stats: ErrorStats::from_records(records.iter().filter(|r| bin_index(edges, r.tci) == Some(b))),
            })
            .collect();
        Ok(Self {
            bin_edges: edges.to_vec(),
            overall: ErrorStats::from_records(&records),
            bins,
            records,
        })
    }
}
