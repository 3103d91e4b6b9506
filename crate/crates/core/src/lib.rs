//! Mask-conditioned diffusion sampling for field-of-view completion.
//!
//! The engine provides DDPM and DDIM samplers, the RePaint inpainting
//! baseline and RePaint-DDIM, which pastes known pixels into the clean-image
//! estimate and resamples between that estimate and the noisy state within
//! each DDIM step. Exact Gaussian-mixture denoisers serve as oracles; a small
//! MLP can be trained on synthetic body phantoms for end-to-end runs.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoiser;
pub mod error;
pub mod fov;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod parallel;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod train;

pub use denoiser::{predict_x0, CorrelatedGaussian2, Denoiser, GaussianMixture, Prediction};
pub use error::{Error, Result};
pub use fov::{Mask, Phantom, PhantomConfig, TruncationConfig};
pub use grid::{Grid, Shape};
pub use rng::{NoiseStream, NormalSource};
pub use samplers::{EpsMode, SamplerRun, Variant};
pub use schedule::{forward_diffuse, DiffusionSchedule, Trajectory};
