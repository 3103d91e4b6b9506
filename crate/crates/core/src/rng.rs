//! Seeded Gaussian noise streams.
//!
//! Every sampler draws its randomness through [`NormalSource`] so a run is a
//! pure function of `(seed, stream)`. Batch APIs give sample `i` stream `i`,
//! which keeps results independent of how work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grid::{Grid, Shape};

pub trait NormalSource {
    fn next_normal(&mut self) -> f64;

    fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }

    fn normal_grid(&mut self, shape: Shape) -> Grid {
        let mut g = Grid::zeros(shape);
        self.fill_normal(g.as_mut_slice());
        g
    }
}

impl<N: NormalSource + ?Sized> NormalSource for &mut N {
    fn next_normal(&mut self) -> f64 {
        (**self).next_normal()
    }
}

/// ChaCha8-backed stream; `stream` selects an independent keystream under the same seed.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            rng: stream_rng(seed, stream),
        }
    }
}

impl NormalSource for NoiseStream {
    fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Wraps a source and counts how many normals were drawn.
#[derive(Debug, Clone)]
pub struct CountingNoise<N> {
    inner: N,
    count: u64,
}

impl<N: NormalSource> CountingNoise<N> {
    pub fn new(inner: N) -> Self {
        Self { inner, count: 0 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn into_inner(self) -> N {
        self.inner
    }
}

impl<N: NormalSource> NormalSource for CountingNoise<N> {
    fn next_normal(&mut self) -> f64 {
        self.count += 1;
        self.inner.next_normal()
    }
}
