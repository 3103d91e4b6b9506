//! Noise schedules, sampling trajectories and forward diffusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Per-step betas and cumulative signal retention `alpha_bar`.
///
/// Steps are 1-based: `beta(t)` for `t` in `1..=T`, `alpha_bar(t)` for `t`
/// in `0..=T` with `alpha_bar(0) == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

impl DiffusionSchedule {
    /// Linear beta schedule from `beta_start` at t = 1 to `beta_end` at t = T.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidRange("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidRange(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            (0..steps)
                .map(|i| beta_start + span * i as f64 / (steps - 1) as f64)
                .collect()
        };
        let schedule = Self::from_betas(betas);
        if !schedule.alpha_bar(steps).is_normal() {
            return Err(Error::InvalidRange(format!(
                "alpha_bar underflows before t = {steps}; shorten the schedule or lower beta"
            )));
        }
        Ok(schedule)
    }

    fn from_betas(betas: Vec<f64>) -> Self {
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Self { betas, alpha_bars }
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        assert!(
            t >= 1 && t <= self.steps(),
            "beta index {t} outside 1..={}",
            self.steps()
        );
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub(crate) fn check_level(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(Error::InvalidRange(format!("level {t} outside 0..={}", self.steps())));
        }
        Ok(())
    }
}

/// Strictly decreasing sampling steps, each paired with the next element
/// (or 0 after the last) as its predecessor level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    steps: Vec<usize>,
}

impl Trajectory {
    pub fn new(steps: Vec<usize>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidTrajectory("empty trajectory".into()));
        }
        if steps[steps.len() - 1] == 0 {
            return Err(Error::InvalidTrajectory("steps must be >= 1".into()));
        }
        if steps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidTrajectory("steps must strictly decrease".into()));
        }
        Ok(Self { steps })
    }

    /// `n_steps` uniformly strided steps `T, T - s, ...` with `s = T / n_steps`.
    /// When `n_steps` does not divide `T` the stride is floored and the
    /// trajectory stops after `n_steps` elements, above `s`.
    pub fn uniform(total: usize, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || total == 0 {
            return Err(Error::InvalidRange("trajectory needs T >= 1 and n_steps >= 1".into()));
        }
        if n_steps > total {
            return Err(Error::InvalidRange(format!("n_steps = {n_steps} exceeds T = {total}")));
        }
        let stride = total / n_steps;
        Self::new((0..n_steps).map(|i| total - i * stride).collect())
    }

    /// Every level `T, T-1, ..., 1`.
    pub fn full(total: usize) -> Result<Self> {
        Self::uniform(total, total)
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> usize {
        self.steps[0]
    }

    /// `(t, t_prev)` pairs in visiting order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, self.steps.get(i + 1).copied().unwrap_or(0)))
    }

    /// True when every step is followed by `t - 1`, ending at 1.
    pub fn is_consecutive(&self) -> bool {
        self.pairs().all(|(t, prev)| prev + 1 == t)
    }

    pub fn check_against(&self, schedule: &DiffusionSchedule) -> Result<()> {
        if self.first() > schedule.steps() {
            return Err(Error::InvalidTrajectory(format!(
                "trajectory starts at {} but the schedule has {} steps",
                self.first(),
                schedule.steps()
            )));
        }
        Ok(())
    }
}

/// `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`.
pub fn forward_diffuse(x0: &Grid, t: usize, eps: &Grid, schedule: &DiffusionSchedule) -> Result<Grid> {
    schedule.check_level(t)?;
    let ab = schedule.alpha_bar(t);
    x0.lin_comb(ab.sqrt(), eps, (1.0 - ab).sqrt())
}
