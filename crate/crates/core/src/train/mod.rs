//! ε-prediction training for the MLP denoiser.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{mlp_eps, time_embedding, Layer, MlpDenoiser, MlpParams};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::parallel::map_indexed;
use crate::rng::stream_rng;
use crate::schedule::{forward_diffuse, DiffusionSchedule};

/// Batch elements per gradient chunk. Fixed so the reduction order does not
/// depend on the worker count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub log_every: usize,
    /// 0 = all available threads.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            iterations: 5000,
            seed: 0,
            embed_dim: 16,
            hidden: vec![128, 128],
            log_every: 500,
            workers: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidRange(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.embed_dim < 2 || !self.embed_dim.is_multiple_of(2) || self.hidden.contains(&0) {
            return Err(Error::InvalidRange(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// One training example after noising: clean sample, level and the noise used.
#[derive(Debug, Clone)]
pub struct NoisedExample {
    pub x0: Grid,
    pub t: usize,
    pub eps: Grid,
}

/// Draws a level uniformly from `1..=T` and fresh standard-normal noise for
/// each batch element, then evaluates [`loss_and_grad_on`].
pub fn loss_and_grad<R: Rng>(
    params: &MlpParams,
    batch: &[Grid],
    schedule: &DiffusionSchedule,
    rng: &mut R,
    workers: usize,
) -> Result<(f64, MlpParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let examples: Vec<NoisedExample> = batch
        .iter()
        .map(|x0| {
            let t = rng.gen_range(1..=schedule.steps());
            let eps = Grid::from_fn(x0.shape(), |_| rng.sample(StandardNormal));
            NoisedExample { x0: x0.clone(), t, eps }
        })
        .collect();
    loss_and_grad_on(params, &examples, schedule, workers)
}

/// Mean over examples of `||eps - eps_hat(x_t, t)||^2` and its exact gradient.
pub fn loss_and_grad_on(
    params: &MlpParams,
    examples: &[NoisedExample],
    schedule: &DiffusionSchedule,
    workers: usize,
) -> Result<(f64, MlpParams)> {
    if examples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / examples.len() as f64;
    let chunks: Vec<&[NoisedExample]> = examples.chunks(GRAD_CHUNK).collect();
    let partials = map_indexed(chunks.len(), workers, |c| -> Result<(f64, MlpParams)> {
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for ex in chunks[c] {
            let x_t = forward_diffuse(&ex.x0, ex.t, &ex.eps, schedule)?;
            let target = ex.eps.as_slice();
            let mut sample_loss = 0.0;
            params.forward_backward(
                x_t.as_slice(),
                ex.t,
                schedule.steps(),
                |out| {
                    out.iter()
                        .zip(target)
                        .map(|(o, e)| {
                            let r = o - e;
                            sample_loss += r * r;
                            2.0 * r * scale
                        })
                        .collect()
                },
                &mut grads,
            )?;
            loss += sample_loss;
        }
        Ok((loss, grads))
    });
    let mut total_loss = 0.0;
    let mut total = params.zeros_like();
    for part in partials {
        let (loss, grads) = part?;
        total_loss += loss;
        total.add_assign(&grads);
    }
    Ok((total_loss * scale, total))
}

const INITIAL_LOSS_WINDOW: usize = 5;

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: MlpParams,
    /// Minibatch loss at every iteration.
    pub losses: Vec<f64>,
}

impl Trained {
    /// Running mean of the last `window` losses over the mean of the first
    /// few, before the optimizer has moved far from initialization.
    pub fn loss_ratio(&self, window: usize) -> Option<f64> {
        let n = self.losses.len();
        if n == 0 {
            return None;
        }
        let head = n.min(INITIAL_LOSS_WINDOW);
        let w = window.clamp(1, n);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some(mean(&self.losses[n - w..]) / mean(&self.losses[..head]))
    }
}

/// Adam training on minibatches drawn with replacement from `data`.
///
/// Initialization uses stream 0 of `config.seed` and minibatch and noise
/// draws use stream 1, so a run is a pure function of its inputs.
pub fn train(data: &[Grid], config: &TrainConfig, schedule: &DiffusionSchedule) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    config.validate()?;
    let shape = data[0].shape();
    if let Some(bad) = data.iter().find(|g| g.shape() != shape) {
        return Err(Error::shape(shape, bad.shape()));
    }
    let mut init_rng = stream_rng(config.seed, 0);
    let params = MlpParams::init(shape.len(), config.embed_dim, &config.hidden, &mut init_rng)?;
    train_from(params, data, config, schedule)
}

/// Continues training from existing parameters.
pub fn train_from(
    mut params: MlpParams,
    data: &[Grid],
    config: &TrainConfig,
    schedule: &DiffusionSchedule,
) -> Result<Trained> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    config.validate()?;
    let mut rng = stream_rng(config.seed, 1);
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut losses = Vec::with_capacity(config.iterations);
    let mut batch = Vec::with_capacity(config.batch_size);
    for iteration in 0..config.iterations {
        batch.clear();
        for _ in 0..config.batch_size {
            batch.push(data[rng.gen_range(0..data.len())].clone());
        }
        let (loss, grads) = loss_and_grad(&params, &batch, schedule, &mut rng, config.workers)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration, loss });
        }
        adam.step(&mut params, &grads);
        losses.push(loss);
        if config.log_every > 0 && (iteration + 1) % config.log_every == 0 {
            let w = config.log_every.min(losses.len());
            let avg = losses[losses.len() - w..].iter().sum::<f64>() / w as f64;
            log::info!("iteration {}/{}: mean loss {avg:.5}", iteration + 1, config.iterations);
        }
    }
    Ok(Trained { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseStream;
    use crate::rng::NormalSource;

    fn schedule() -> DiffusionSchedule {
        DiffusionSchedule::linear(100, 1e-3, 0.2).unwrap()
    }

    fn examples(dim: usize, n: usize, seed: u64) -> Vec<NoisedExample> {
        let mut noise = NoiseStream::new(seed, 0);
        let mut rng = stream_rng(seed, 1);
        (0..n)
            .map(|_| NoisedExample {
                x0: noise.normal_grid(crate::grid::Shape::Vector(dim)),
                t: rng.gen_range(1..=100),
                eps: noise.normal_grid(crate::grid::Shape::Vector(dim)),
            })
            .collect()
    }

    #[test]
    fn zero_output_layer_loss_is_dimension() {
        let mut rng = stream_rng(3, 0);
        let mut p = MlpParams::init(4, 4, &[8], &mut rng).unwrap();
        let last = p.layers().len() - 1;
        let zeroed: Vec<Layer> = p
            .layers()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if i == last {
                    Layer::zeros(l.rows(), l.cols())
                } else {
                    l.clone()
                }
            })
            .collect();
        p = MlpParams::from_layers(zeroed).unwrap();
        let batch = vec![Grid::from_vec(vec![0.5, -0.2, 1.0, 0.0]); 10_000];
        let (loss, _) = loss_and_grad(&p, &batch, &schedule(), &mut rng, 0).unwrap();
        // ||eps||^2 ~ chi^2_4: mean 4, variance 8.
        let se = (8.0f64 / 10_000.0).sqrt();
        assert!((loss - 4.0).abs() < 4.0 * se, "loss {loss}");
    }

    #[test]
    fn empty_batch_rejected() {
        let mut rng = stream_rng(0, 0);
        let p = MlpParams::init(2, 2, &[3], &mut rng).unwrap();
        assert!(matches!(
            loss_and_grad(&p, &[], &schedule(), &mut rng, 1),
            Err(Error::EmptyBatch)
        ));
        assert!(matches!(
            train(&[], &TrainConfig::default(), &schedule()),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn duplication_and_permutation_leave_loss_unchanged() {
        let mut rng = stream_rng(4, 0);
        let p = MlpParams::init(3, 4, &[6, 5], &mut rng).unwrap();
        let ex = examples(3, 13, 8);
        let (base, base_grad) = loss_and_grad_on(&p, &ex, &schedule(), 1).unwrap();

        let doubled: Vec<NoisedExample> = ex.iter().flat_map(|e| [e.clone(), e.clone()]).collect();
        let (dup, dup_grad) = loss_and_grad_on(&p, &doubled, &schedule(), 1).unwrap();
        assert!((dup - base).abs() < 1e-12 * base.abs().max(1.0));

        let mut shuffled = ex.clone();
        shuffled.reverse();
        shuffled.swap(0, 5);
        let (perm, perm_grad) = loss_and_grad_on(&p, &shuffled, &schedule(), 1).unwrap();
        assert!((perm - base).abs() < 1e-12 * base.abs().max(1.0));
        for ((a, b), c) in base_grad.params().zip(dup_grad.params()).zip(perm_grad.params()) {
            assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_independent_of_worker_count() {
        let mut rng = stream_rng(4, 0);
        let p = MlpParams::init(3, 4, &[6], &mut rng).unwrap();
        let ex = examples(3, 37, 2);
        let (l1, g1) = loss_and_grad_on(&p, &ex, &schedule(), 1).unwrap();
        let (l4, g4) = loss_and_grad_on(&p, &ex, &schedule(), 4).unwrap();
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert!(g1 == g4);
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let data = vec![Grid::from_vec(vec![1.0, -1.0]), Grid::from_vec(vec![-1.0, 1.0])];
        let config = TrainConfig {
            learning_rate: 0.0,
            iterations: 5,
            batch_size: 4,
            hidden: vec![8],
            embed_dim: 4,
            ..TrainConfig::default()
        };
        let trained = train(&data, &config, &schedule()).unwrap();
        let mut init_rng = stream_rng(config.seed, 0);
        let init = MlpParams::init(2, 4, &[8], &mut init_rng).unwrap();
        assert_eq!(trained.params, init);
    }

    #[test]
    fn single_iteration_is_reproducible() {
        let data = vec![Grid::from_vec(vec![1.0, -1.0]), Grid::from_vec(vec![-1.0, 1.0])];
        let config = TrainConfig {
            iterations: 1,
            batch_size: 4,
            hidden: vec![8],
            embed_dim: 4,
            seed: 77,
            ..TrainConfig::default()
        };
        let a = train(&data, &config, &schedule()).unwrap();
        let b = train(&data, &config, &schedule()).unwrap();
        assert!(a.params == b.params);
        let mut init_rng = stream_rng(77, 0);
        let init = MlpParams::init(2, 4, &[8], &mut init_rng).unwrap();
        // One Adam step moves each parameter by at most about the learning rate.
        let max_move = a
            .params
            .params()
            .zip(init.params())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_move > 0.0 && max_move <= 1e-3 * 1.0001);
    }
}
