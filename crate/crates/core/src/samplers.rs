//! Reverse-diffusion samplers: DDPM, DDIM, RePaint-DDPM and RePaint-DDIM.
//!
//! All randomness comes from a [`NormalSource`]; given the same source state
//! every sampler is bitwise reproducible. Normal draws per run:
//!
//! | sampler       | draws                                                        |
//! |---------------|--------------------------------------------------------------|
//! | DDIM          | `d`                                                          |
//! | DDPM          | `d * n` (no noise on the final step)                         |
//! | RePaint-DDIM  | `d + n * (U - 1) * d`                                        |
//! | RePaint-DDPM  | `d + U * ((n - 1) * d + n * k) + n * (U - 1) * d`            |
//!
//! with `d` the sample size, `n` the trajectory length and `k` the number of
//! known pixels.

use std::fmt;
use std::str::FromStr;

use crate::denoiser::{predict_x0, Denoiser};
use crate::error::{Error, Result};
use crate::fov::Mask;
use crate::grid::{Grid, Shape};
use crate::parallel::map_indexed;
use crate::rng::{NoiseStream, NormalSource};
use crate::schedule::{DiffusionSchedule, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Ddpm,
    Ddim,
    RepaintDdim,
    RepaintDdpm,
}

impl Variant {
    pub fn is_conditional(self) -> bool {
        matches!(self, Variant::RepaintDdim | Variant::RepaintDdpm)
    }

    pub fn needs_consecutive(self) -> bool {
        matches!(self, Variant::Ddpm | Variant::RepaintDdpm)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ddpm => "ddpm",
            Variant::Ddim => "ddim",
            Variant::RepaintDdim => "repaint-ddim",
            Variant::RepaintDdpm => "repaint-ddpm",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ddpm" => Ok(Variant::Ddpm),
            "ddim" => Ok(Variant::Ddim),
            "repaint-ddim" => Ok(Variant::RepaintDdim),
            "repaint-ddpm" => Ok(Variant::RepaintDdpm),
            other => Err(format!(
                "unknown sampler `{other}` (expected ddpm, ddim, repaint-ddim or repaint-ddpm)"
            )),
        }
    }
}

/// How RePaint-DDIM obtains the noise estimate for the outer update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpsMode {
    /// Reuse the evaluation from the last resampling iteration (same `x_t`, same `t`).
    #[default]
    Reuse,
    /// Call the denoiser again.
    Recompute,
}

impl FromStr for EpsMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "reuse" => Ok(EpsMode::Reuse),
            "recompute" => Ok(EpsMode::Recompute),
            other => Err(format!("unknown eps mode `{other}` (expected reuse or recompute)")),
        }
    }
}

/// Known image content for conditional sampling.
#[derive(Debug, Clone, Copy)]
pub struct Known<'a> {
    pub image: &'a Grid,
    pub mask: &'a Mask,
}

/// Called after each outer step with `(step index, t_prev, x_{t_prev})`.
pub type StepObserver<'a> = &'a (dyn Fn(usize, usize, &Grid) + Sync);

/// Everything a sampler needs except the noise source.
pub struct SamplerRun<'a, D: ?Sized> {
    pub denoiser: &'a D,
    pub schedule: &'a DiffusionSchedule,
    pub trajectory: &'a Trajectory,
    pub shape: Shape,
    /// Resampling count U (RePaint variants).
    pub resample: usize,
    pub known: Option<Known<'a>>,
    pub eps_mode: EpsMode,
    pub observer: Option<StepObserver<'a>>,
}

impl<D: ?Sized> Clone for SamplerRun<'_, D> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<D: ?Sized> Copy for SamplerRun<'_, D> {}

impl<'a, D: Denoiser + ?Sized> SamplerRun<'a, D> {
    pub fn new(denoiser: &'a D, schedule: &'a DiffusionSchedule, trajectory: &'a Trajectory, shape: Shape) -> Self {
        Self {
            denoiser,
            schedule,
            trajectory,
            shape,
            resample: 1,
            known: None,
            eps_mode: EpsMode::Reuse,
            observer: None,
        }
    }

    pub fn with_known(mut self, image: &'a Grid, mask: &'a Mask) -> Self {
        self.known = Some(Known { image, mask });
        self
    }

    pub fn with_resample(mut self, resample: usize) -> Self {
        self.resample = resample;
        self
    }

    pub fn with_eps_mode(mut self, mode: EpsMode) -> Self {
        self.eps_mode = mode;
        self
    }

    pub fn with_observer(mut self, observer: StepObserver<'a>) -> Self {
        self.observer = Some(observer);
        self
    }

    fn validate(&self) -> Result<()> {
        self.trajectory.check_against(self.schedule)?;
        if let Some(known) = self.known {
            if known.image.shape() != self.shape {
                return Err(Error::shape(self.shape, known.image.shape()));
            }
            if known.mask.shape() != self.shape {
                return Err(Error::shape(self.shape, known.mask.shape()));
            }
        }
        Ok(())
    }

    fn known_or_err(&self) -> Result<Known<'a>> {
        self.known
            .ok_or_else(|| Error::InvalidRange("conditional sampler needs a known image and mask".into()))
    }

    fn check_resample(&self) -> Result<()> {
        if self.resample == 0 {
            return Err(Error::InvalidRange("resample count U must be at least 1".into()));
        }
        Ok(())
    }

    fn require_consecutive(&self) -> Result<()> {
        if !self.trajectory.is_consecutive() {
            return Err(Error::InvalidTrajectory(
                "ancestral sampling needs consecutive steps ending at 1".into(),
            ));
        }
        Ok(())
    }

    fn notify(&self, index: usize, t_prev: usize, x: &Grid) {
        if let Some(observer) = self.observer {
            observer(index, t_prev, x);
        }
    }
}

/// `sqrt(ab_prev) * x0_hat + sqrt(1 - ab_prev) * eps_hat`.
fn ddim_update(x0_hat: &Grid, eps: &Grid, alpha_bar_prev: f64) -> Result<Grid> {
    x0_hat.lin_comb(alpha_bar_prev.sqrt(), eps, (1.0 - alpha_bar_prev).sqrt())
}

/// Deterministic (eta = 0) DDIM step from level `t` to `t_prev`.
pub fn ddim_step<D: Denoiser + ?Sized>(
    denoiser: &D,
    x_t: &Grid,
    t: usize,
    t_prev: usize,
    schedule: &DiffusionSchedule,
) -> Result<Grid> {
    if t_prev >= t {
        return Err(Error::InvalidTrajectory(format!(
            "DDIM step needs t > t_prev, got {t} -> {t_prev}"
        )));
    }
    let pred = predict_x0(denoiser, x_t, t, schedule)?;
    ddim_update(&pred.x0, &pred.eps, schedule.alpha_bar(t_prev))
}

/// Ancestral DDPM step from `t` to `t - 1`. No noise is added at `t = 1`.
pub fn ddpm_step<D: Denoiser + ?Sized, N: NormalSource + ?Sized>(
    denoiser: &D,
    x_t: &Grid,
    t: usize,
    schedule: &DiffusionSchedule,
    noise: &mut N,
) -> Result<Grid> {
    if t == 0 {
        return Err(Error::TimeZero);
    }
    schedule.check_level(t)?;
    let eps = denoiser.predict_eps(x_t, t, schedule)?;
    x_t.ensure_same_shape(&eps)?;
    let beta = schedule.beta(t);
    let ab = schedule.alpha_bar(t);
    let eps_coef = beta / (1.0 - ab).sqrt();
    let inv = 1.0 / (1.0 - beta).sqrt();
    let mut out = x_t.clone();
    for (o, e) in out.as_mut_slice().iter_mut().zip(eps.as_slice()) {
        *o = inv * (*o - eps_coef * e);
    }
    if t > 1 {
        let sigma = (beta * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - ab)).sqrt();
        for o in out.as_mut_slice() {
            *o += sigma * noise.next_normal();
        }
    }
    Ok(out)
}

/// Unconditional sampling from `x_T ~ N(0, I)`.
pub fn sample<D: Denoiser + ?Sized, N: NormalSource + ?Sized>(
    run: &SamplerRun<'_, D>,
    variant: Variant,
    noise: &mut N,
) -> Result<Grid> {
    run.validate()?;
    if run.known.is_some() || variant.is_conditional() {
        return Err(Error::InvalidRange(format!(
            "`sample` is unconditional; use {variant} with known content through `run_variant`"
        )));
    }
    let mut x = noise.normal_grid(run.shape);
    match variant {
        Variant::Ddim => {
            for (i, (t, t_prev)) in run.trajectory.pairs().enumerate() {
                x = ddim_step(run.denoiser, &x, t, t_prev, run.schedule)?;
                run.notify(i, t_prev, &x);
            }
        }
        Variant::Ddpm => {
            run.require_consecutive()?;
            for (i, (t, t_prev)) in run.trajectory.pairs().enumerate() {
                x = ddpm_step(run.denoiser, &x, t, run.schedule, noise)?;
                run.notify(i, t_prev, &x);
            }
        }
        _ => unreachable!(),
    }
    Ok(x)
}

/// RePaint-DDIM: known-region replacement on the clean-image estimate with
/// `U` resampling iterations per DDIM step.
///
/// At every trajectory level `t` the inner loop alternates between the
/// estimate `x0_hat` (with the known pixels pasted in) and a renoised
/// `x_t`; the outer update then jumps to the next trajectory level.
pub fn repaint_ddim<D: Denoiser + ?Sized, N: NormalSource + ?Sized>(
    run: &SamplerRun<'_, D>,
    noise: &mut N,
) -> Result<Grid> {
    run.validate()?;
    run.check_resample()?;
    let known = run.known_or_err()?;
    let schedule = run.schedule;

    let mut x = noise.normal_grid(run.shape);
    for (i, (t, t_prev)) in run.trajectory.pairs().enumerate() {
        let ab = schedule.alpha_bar(t);
        let (sig, noi) = (ab.sqrt(), (1.0 - ab).sqrt());
        let mut u = 1;
        let (x0_hat, eps) = loop {
            let pred = predict_x0(run.denoiser, &x, t, schedule)?;
            let mut x0_hat = pred.x0;
            known.mask.paste(known.image, &mut x0_hat)?;
            if u == run.resample {
                break (x0_hat, pred.eps);
            }
            for (xi, x0) in x.as_mut_slice().iter_mut().zip(x0_hat.as_slice()) {
                *xi = sig * x0 + noi * noise.next_normal();
            }
            u += 1;
        };
        let eps = match run.eps_mode {
            EpsMode::Reuse => eps,
            EpsMode::Recompute => run.denoiser.predict_eps(&x, t, schedule)?,
        };
        x = ddim_update(&x0_hat, &eps, schedule.alpha_bar(t_prev))?;
        run.notify(i, t_prev, &x);
    }
    Ok(x)
}

/// Baseline RePaint over consecutive DDPM steps: the known region of
/// `x_{t-1}` is replaced by a forward-diffused copy of the known image, and
/// each step is resampled `U` times by diffusing `x_{t-1}` back to level `t`.
pub fn repaint_ddpm<D: Denoiser + ?Sized, N: NormalSource + ?Sized>(
    run: &SamplerRun<'_, D>,
    noise: &mut N,
) -> Result<Grid> {
    run.validate()?;
    run.check_resample()?;
    run.require_consecutive()?;
    let known = run.known_or_err()?;
    let schedule = run.schedule;

    let mut x = noise.normal_grid(run.shape);
    for (i, (t, t_prev)) in run.trajectory.pairs().enumerate() {
        let ab_prev = schedule.alpha_bar(t_prev);
        let (sig, noi) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
        let beta = schedule.beta(t);
        let (keep, add) = ((1.0 - beta).sqrt(), beta.sqrt());
        let mut u = 1;
        let x_prev = loop {
            let mut x_prev = ddpm_step(run.denoiser, &x, t, schedule, noise)?;
            for ((xp, k), idx) in x_prev.as_mut_slice().iter_mut().zip(known.image.as_slice()).zip(0..) {
                if known.mask.is_known(idx) {
                    *xp = sig * k + noi * noise.next_normal();
                }
            }
            if u == run.resample {
                break x_prev;
            }
            for (xi, xp) in x.as_mut_slice().iter_mut().zip(x_prev.as_slice()) {
                *xi = keep * xp + add * noise.next_normal();
            }
            u += 1;
        };
        x = x_prev;
        run.notify(i, t_prev, &x);
    }
    Ok(x)
}

/// Dispatches to the sampler for `variant`.
pub fn run_variant<D: Denoiser + ?Sized, N: NormalSource + ?Sized>(
    run: &SamplerRun<'_, D>,
    variant: Variant,
    noise: &mut N,
) -> Result<Grid> {
    match variant {
        Variant::Ddpm | Variant::Ddim => sample(run, variant, noise),
        Variant::RepaintDdim => repaint_ddim(run, noise),
        Variant::RepaintDdpm => repaint_ddpm(run, noise),
    }
}

/// `count` independent runs; sample `i` uses stream `i` of `seed`, so the
/// output does not depend on `workers`.
pub fn sample_batch<D: Denoiser + ?Sized>(
    run: &SamplerRun<'_, D>,
    variant: Variant,
    count: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Grid>> {
    map_indexed(count, workers, |i| {
        let mut noise = NoiseStream::new(seed, i as u64);
        run_variant(run, variant, &mut noise)
    })
    .into_iter()
    .collect()
}
