//! Noise-prediction models and the clean-image estimate derived from them.

mod gmm;

pub use gmm::{gmm_eps, gmm_posterior_x0_mean, CorrelatedGaussian2, GaussianMixture};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::DiffusionSchedule;

/// Predicts the noise component of `x_t` at level `t`.
///
/// Implementations must be pure: identical inputs give bitwise identical
/// outputs. Asking for `t == 0` is an error.
pub trait Denoiser: Send + Sync {
    fn predict_eps(&self, x_t: &Grid, t: usize, schedule: &DiffusionSchedule) -> Result<Grid>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_eps(&self, x_t: &Grid, t: usize, schedule: &DiffusionSchedule) -> Result<Grid> {
        (**self).predict_eps(x_t, t, schedule)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict_eps(&self, x_t: &Grid, t: usize, schedule: &DiffusionSchedule) -> Result<Grid> {
        (**self).predict_eps(x_t, t, schedule)
    }
}

/// The clean-image estimate together with the noise prediction it came from.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub x0: Grid,
    pub eps: Grid,
}

pub(crate) fn check_level(t: usize, schedule: &DiffusionSchedule) -> Result<()> {
    if t == 0 {
        return Err(Error::TimeZero);
    }
    schedule.check_level(t)
}

/// `x0_hat = (x_t - sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_bar_t)`.
pub fn predict_x0<D: Denoiser + ?Sized>(
    denoiser: &D,
    x_t: &Grid,
    t: usize,
    schedule: &DiffusionSchedule,
) -> Result<Prediction> {
    check_level(t, schedule)?;
    let eps = denoiser.predict_eps(x_t, t, schedule)?;
    x_t.ensure_same_shape(&eps)?;
    let ab = schedule.alpha_bar(t);
    let x0 = x0_from_eps(x_t, &eps, ab);
    Ok(Prediction { x0, eps })
}

pub(crate) fn x0_from_eps(x_t: &Grid, eps: &Grid, alpha_bar: f64) -> Grid {
    let noise_scale = (1.0 - alpha_bar).sqrt();
    let inv = 1.0 / alpha_bar.sqrt();
    let mut out = x_t.clone();
    for (o, e) in out.as_mut_slice().iter_mut().zip(eps.as_slice()) {
        *o = (*o - noise_scale * e) * inv;
    }
    out
}

/// Always predicts zero noise. Useful as a null model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict_eps(&self, x_t: &Grid, t: usize, schedule: &DiffusionSchedule) -> Result<Grid> {
        check_level(t, schedule)?;
        Ok(Grid::zeros(x_t.shape()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::forward_diffuse;

    struct Known(Grid);

    impl Denoiser for Known {
        fn predict_eps(&self, _: &Grid, _: usize, _: &DiffusionSchedule) -> Result<Grid> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn exact_noise_inverts_forward_diffusion() {
        let s = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let x0 = Grid::from_vec(vec![0.25, -0.8, 1.5]);
        let eps = Grid::from_vec(vec![1.1, 0.3, -2.0]);
        for t in [1, 10, 500, 999] {
            let xt = forward_diffuse(&x0, t, &eps, &s).unwrap();
            let p = predict_x0(&Known(eps.clone()), &xt, t, &s).unwrap();
            assert!(p.x0.max_abs_diff(&x0).unwrap() < 1e-6);
            assert!(p.eps.bitwise_eq(&eps));
        }
    }

    #[test]
    fn zero_denoiser_rescales() {
        let s = DiffusionSchedule::linear(2, 0.5, 0.5).unwrap();
        let p = predict_x0(&ZeroDenoiser, &Grid::from_vec(vec![0.5]), 2, &s).unwrap();
        assert_eq!(p.x0.as_slice(), &[1.0]);
    }

    #[test]
    fn level_zero_is_an_error() {
        let s = DiffusionSchedule::linear(10, 1e-3, 0.2).unwrap();
        let g = Grid::from_vec(vec![0.0]);
        assert!(matches!(predict_x0(&ZeroDenoiser, &g, 0, &s), Err(Error::TimeZero)));
        assert!(predict_x0(&ZeroDenoiser, &g, 11, &s).is_err());
    }

    #[test]
    fn gmm_predict_x0_standard_normal() {
        // One step with beta = 0.5 gives alpha_bar = 0.5.
        let s = DiffusionSchedule::linear(1, 0.5, 0.5).unwrap();
        let prior = GaussianMixture::standard_normal(1);
        let p = predict_x0(&prior, &Grid::from_vec(vec![1.0]), 1, &s).unwrap();
        assert!((p.x0.as_slice()[0] - 0.5f64.sqrt()).abs() < 1e-6);
    }
}
