use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fovdiff::fov::{generate_phantom, Mask, PhantomConfig};
use fovdiff::parallel::available_workers;
use fovdiff::samplers::sample_batch;
use fovdiff::train::{loss_and_grad, MlpDenoiser, MlpParams};
use fovdiff::{DiffusionSchedule, GaussianMixture, SamplerRun, Shape, Trajectory, Variant};

fn worker_counts() -> Vec<usize> {
    let mut w = vec![1];
    if available_workers() > 1 {
        w.push(available_workers());
    }
    w
}

fn gmm_batch(c: &mut Criterion) {
    let schedule = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let trajectory = Trajectory::uniform(1000, 50).unwrap();
    let prior = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![vec![-1.0; 64], vec![1.0; 64]],
        vec![vec![0.2; 64], vec![0.5; 64]],
    )
    .unwrap();
    let known = fovdiff::Grid::zeros(Shape::Vector(64));
    let mask = Mask::from_fn(Shape::Vector(64), |i| i < 32);
    let run = SamplerRun::new(&prior, &schedule, &trajectory, Shape::Vector(64))
        .with_known(&known, &mask)
        .with_resample(5);
    let mut group = c.benchmark_group("repaint_ddim_gmm_64x64");
    group.sample_size(10);
    for workers in worker_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| sample_batch(&run, Variant::RepaintDdim, 64, 7, w).unwrap())
        });
    }
    group.finish();
}

fn mlp_batch(c: &mut Criterion) {
    let schedule = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let trajectory = Trajectory::uniform(1000, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = MlpParams::init(256, 16, &[128, 128], &mut rng).unwrap();
    let denoiser = MlpDenoiser::new(params.clone());
    let config = PhantomConfig::small();
    let phantom = generate_phantom(&mut rng, &config).unwrap();
    let mask = Mask::from_fn(config.shape(), |i| i % 16 >= 3 && i % 16 < 13);

    let run = SamplerRun::new(&denoiser, &schedule, &trajectory, config.shape())
        .with_known(&phantom.image, &mask)
        .with_resample(2);
    let mut group = c.benchmark_group("repaint_ddim_mlp_16x16");
    group.sample_size(10);
    for workers in worker_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| sample_batch(&run, Variant::RepaintDdim, 16, 7, w).unwrap())
        });
    }
    group.finish();

    let data: Vec<_> = (0..64)
        .map(|_| generate_phantom(&mut rng, &config).unwrap().image)
        .collect();
    let mut group = c.benchmark_group("loss_and_grad_batch64");
    for workers in worker_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            b.iter(|| loss_and_grad(&params, &data, &schedule, &mut rng, w).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gmm_batch, mlp_batch);
criterion_main!(benches);
