//! Exact posterior means for Gaussian priors.
//!
//! Under `x_t = sqrt(ab) x0 + sqrt(1 - ab) eps`, a Gaussian-mixture prior on
//! `x0` keeps a closed-form posterior, which makes these priors exact
//! denoisers for checking samplers.

use serde::{Deserialize, Serialize};

use super::{check_level, Denoiser};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::DiffusionSchedule;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidRange("mixture needs at least one component".into()));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::InvalidRange(format!(
                "{k} weights but {} means and {} variance vectors",
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|v| v.len() != dim) {
            return Err(Error::InvalidRange("component dimensions disagree".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidRange("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidRange(format!("weights sum to {total}, not 1")));
        }
        if variances.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidRange("variances must be positive and finite".into()));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::InvalidRange("means must be finite".into()));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![vec![0.0; dim]],
            variances: vec![vec![1.0; dim]],
        }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }
}

fn check_alpha_bar(alpha_bar: f64) -> Result<()> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::InvalidRange(format!("alpha_bar {alpha_bar} outside (0, 1]")));
    }
    Ok(())
}

/// `E[x0 | x_t]` under the mixture prior.
pub fn gmm_posterior_x0_mean(prior: &GaussianMixture, x_t: &Grid, alpha_bar: f64) -> Result<Grid> {
    check_alpha_bar(alpha_bar)?;
    if x_t.len() != prior.dim() {
        return Err(Error::shape(prior.dim(), x_t.len()));
    }
    if alpha_bar == 1.0 {
        return Ok(x_t.clone());
    }
    let x = x_t.as_slice();
    let sa = alpha_bar.sqrt();
    let noise_var = 1.0 - alpha_bar;

    let k = prior.components();
    let mut log_resp = Vec::with_capacity(k);
    let mut comp_means = Vec::with_capacity(k);
    for c in 0..k {
        let mut log_lik = prior.weights[c].ln();
        let mut mean = Vec::with_capacity(x.len());
        for (j, &xj) in x.iter().enumerate() {
            let mu = prior.means[c][j];
            let var = prior.variances[c][j];
            let total_var = alpha_bar * var + noise_var;
            let resid = xj - sa * mu;
            log_lik -= 0.5 * (resid * resid / total_var + total_var.ln());
            mean.push(mu + (sa * var / total_var) * resid);
        }
        log_resp.push(log_lik);
        comp_means.push(mean);
    }
    let peak = log_resp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_resp.iter().map(|l| (l - peak).exp()).collect();
    let norm: f64 = unnorm.iter().sum();

    let mut out = vec![0.0; x.len()];
    for (r, mean) in unnorm.iter().zip(&comp_means) {
        let r = r / norm;
        for (o, m) in out.iter_mut().zip(mean) {
            *o += r * m;
        }
    }
    Grid::new(x_t.shape(), out)
}

/// Noise implied by the posterior mean: `(x_t - sqrt(ab) E[x0|x_t]) / sqrt(1 - ab)`.
pub fn gmm_eps(prior: &GaussianMixture, x_t: &Grid, alpha_bar: f64) -> Result<Grid> {
    if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
        return Err(Error::InvalidRange(format!(
            "noise prediction needs alpha_bar in (0, 1), got {alpha_bar}"
        )));
    }
    let mean = gmm_posterior_x0_mean(prior, x_t, alpha_bar)?;
    eps_from_mean(x_t, &mean, alpha_bar)
}

fn eps_from_mean(x_t: &Grid, mean: &Grid, alpha_bar: f64) -> Result<Grid> {
    let inv = 1.0 / (1.0 - alpha_bar).sqrt();
    x_t.lin_comb(inv, mean, -alpha_bar.sqrt() * inv)
}

impl Denoiser for GaussianMixture {
    fn predict_eps(&self, x_t: &Grid, t: usize, schedule: &DiffusionSchedule) -> Result<Grid> {
        check_level(t, schedule)?;
        gmm_eps(self, x_t, schedule.alpha_bar(t))
    }
}

/// Full-covariance Gaussian in two dimensions, for tests that need
/// cross-coordinate dependence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedGaussian2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl CorrelatedGaussian2 {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if cov[0][1] != cov[1][0] || !(cov[0][0] > 0.0) || !(det > 0.0) {
            return Err(Error::InvalidRange(
                "covariance must be symmetric positive definite".into(),
            ));
        }
        Ok(Self { mean, cov })
    }

    /// Zero mean, unit variances, correlation `rho`.
    pub fn unit_correlated(rho: f64) -> Result<Self> {
        Self::new([0.0, 0.0], [[1.0, rho], [rho, 1.0]])
    }

    pub fn posterior_x0_mean(&self, x_t: &Grid, alpha_bar: f64) -> Result<Grid> {
        check_alpha_bar(alpha_bar)?;
        if x_t.len() != 2 {
            return Err(Error::shape(2, x_t.len()));
        }
        if alpha_bar == 1.0 {
            return Ok(x_t.clone());
        }
        let sa = alpha_bar.sqrt();
        let nv = 1.0 - alpha_bar;
        let s = self.cov;
        // A = ab * S + (1 - ab) I; posterior mean = mu + sa * S A^{-1} (x - sa mu)
        let a = [
            [alpha_bar * s[0][0] + nv, alpha_bar * s[0][1]],
            [alpha_bar * s[1][0], alpha_bar * s[1][1] + nv],
        ];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let x = x_t.as_slice();
        let r = [x[0] - sa * self.mean[0], x[1] - sa * self.mean[1]];
        let v = [
            (a[1][1] * r[0] - a[0][1] * r[1]) / det,
            (-a[1][0] * r[0] + a[0][0] * r[1]) / det,
        ];
        let out = vec![
            self.mean[0] + sa * (s[0][0] * v[0] + s[0][1] * v[1]),
            self.mean[1] + sa * (s[1][0] * v[0] + s[1][1] * v[1]),
        ];
        Grid::new(x_t.shape(), out)
    }

    /// Mean of coordinate 2 given coordinate 1, under the clean prior.
    pub fn conditional_mean_second(&self, first: f64) -> f64 {
        self.mean[1] + self.cov[1][0] / self.cov[0][0] * (first - self.mean[0])
    }
}

impl Denoiser for CorrelatedGaussian2 {
    fn predict_eps(&self, x_t: &Grid, t: usize, schedule: &DiffusionSchedule) -> Result<Grid> {
        check_level(t, schedule)?;
        let ab = schedule.alpha_bar(t);
        let mean = self.posterior_x0_mean(x_t, ab)?;
        eps_from_mean(x_t, &mean, ab)
    }
}
