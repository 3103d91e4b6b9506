//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p fovdiff --test acceptance -- 4 5`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fovdiff::fov::{generate_phantom, sample_truncation, Mask, PhantomConfig, TruncationConfig};
use fovdiff::io::dataset::{case_record, phantom_images, simulate_cases};
use fovdiff::io::gridfile::{read_grid, write_grid, Dtype};
use fovdiff::io::report::{read_records_csv, read_report_json, write_records_csv, write_report_json};
use fovdiff::metrics::{sample_moments, AgreementReport, SampleRecord, DEFAULT_TCI_EDGES};
use fovdiff::parallel::map_indexed;
use fovdiff::samplers::{repaint_ddim, sample, sample_batch};
use fovdiff::train::{
    loss_and_grad_on, read_checkpoint, train, write_checkpoint, Layer, MlpDenoiser, MlpParams, NoisedExample,
    TrainConfig,
};
use fovdiff::{
    CorrelatedGaussian2, DiffusionSchedule, GaussianMixture, Grid, NoiseStream, SamplerRun, Shape, Trajectory, Variant,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn default_schedule() -> DiffusionSchedule {
    DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap()
}

fn schedule_correctness() -> Outcome {
    let s = default_schedule();
    // Independent oracle: sum of logs instead of a running product.
    let log_sum: f64 = (0..1000)
        .map(|i| (1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0)).ln())
        .sum();
    let oracle = log_sum.exp();
    let got = s.alpha_bar(1000);
    if ((got - oracle) / oracle).abs() > 1e-10 {
        return Err(format!("alpha_bar(1000) = {got:e}, oracle {oracle:e}"));
    }
    let mut worst = 0.0f64;
    for t in 1..=1000 {
        let ratio = s.alpha_bar(t) / s.alpha_bar(t - 1);
        worst = worst.max((ratio - (1.0 - s.beta(t))).abs());
    }
    check(
        ((got - 4.0e-5) / 4.0e-5).abs() < 0.05 && worst < 1e-12,
        format!("alpha_bar(1000) = {got:.4e} (target 4.0e-5 +/- 5%), worst ratio error {worst:.1e}"),
    )
}

fn random_prior(rng: &mut ChaCha8Rng, dim: usize) -> GaussianMixture {
    let k = rng.gen_range(1..=3);
    let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let means = (0..k)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let vars = (0..k)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.05..1.5)).collect())
        .collect();
    GaussianMixture::new(weights, means, vars).unwrap()
}

fn reduction_identity() -> Outcome {
    let s = default_schedule();
    let traj = Trajectory::uniform(1000, 50).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for shape in [Shape::Vector(8), Shape::image(64, 64)] {
        for _ in 0..20 {
            let prior = random_prior(&mut rng, shape.len());
            let seed: u64 = rng.gen();
            let known = Grid::from_fn(shape, |_| rng.sample(StandardNormal));
            let mask = Mask::zeros(shape);
            let base = SamplerRun::new(&prior, &s, &traj, shape);
            let plain = sample(&base, Variant::Ddim, &mut NoiseStream::new(seed, 0)).unwrap();
            let cond = base.with_known(&known, &mask).with_resample(1);
            let painted = repaint_ddim(&cond, &mut NoiseStream::new(seed, 0)).unwrap();
            if !plain.bitwise_eq(&painted) {
                mismatches += 1;
            }
        }
    }
    check(
        mismatches == 0,
        format!("{mismatches} of 40 runs differ bitwise from DDIM"),
    )
}

fn known_region_exactness() -> Outcome {
    let s = default_schedule();
    let traj = Trajectory::uniform(1000, 50).unwrap();
    let resample = [1, 5, 20];

    // GMM at d = 2 with random masks and known values.
    let gmm_worst = map_indexed(100, 0, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let prior = random_prior(&mut rng, 2);
        let known = Grid::from_fn(Shape::Vector(2), |_| rng.gen_range(-3.0..3.0));
        let mask = Mask::from_fn(Shape::Vector(2), |_| rng.gen_bool(0.5));
        let run = SamplerRun::new(&prior, &s, &traj, Shape::Vector(2))
            .with_known(&known, &mask)
            .with_resample(resample[i % 3]);
        let out = repaint_ddim(&run, &mut NoiseStream::new(i as u64, 0)).unwrap();
        masked_diff(&out, &known, &mask)
    })
    .into_iter()
    .fold(0.0f64, f64::max);

    // Untrained MLP at 16x16 on phantoms with random FOV truncation.
    let config = PhantomConfig::small();
    let mut init = ChaCha8Rng::seed_from_u64(5);
    let denoiser = MlpDenoiser::new(MlpParams::init(256, 16, &[64, 64], &mut init).unwrap());
    let mlp_worst = map_indexed(100, 0, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + i as u64);
        let ph = generate_phantom(&mut rng, &config).unwrap();
        let tr = sample_truncation(&mut rng, &ph.labels, &TruncationConfig::default()).unwrap();
        let run = SamplerRun::new(&denoiser, &s, &traj, config.shape())
            .with_known(&ph.image, &tr.mask)
            .with_resample(resample[i % 3]);
        let out = repaint_ddim(&run, &mut NoiseStream::new(i as u64, 1)).unwrap();
        masked_diff(&out, &ph.image, &tr.mask)
    })
    .into_iter()
    .fold(0.0f64, f64::max);

    check(
        gmm_worst < 1e-6 && mlp_worst < 1e-6,
        format!("max known-pixel deviation: GMM d=2 {gmm_worst:.1e}, MLP 16x16 {mlp_worst:.1e}"),
    )
}

fn masked_diff(a: &Grid, b: &Grid, mask: &Mask) -> f64 {
    let mut worst = 0.0f64;
    for (i, (x, y)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
        if mask.is_known(i) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn conditional_oracle() -> Outcome {
    let rho = 0.8;
    let s = default_schedule();
    let traj = Trajectory::uniform(1000, 50).unwrap();
    let prior = CorrelatedGaussian2::unit_correlated(rho).unwrap();
    let known = Grid::from_vec(vec![1.0, 0.0]);
    let mask = Mask::from_fn(Shape::Vector(2), |i| i == 0);
    // Zero-mean, unit-variance Gaussian: E[x2 | x1] = rho * x1.
    let target = rho * 1.0;
    let stats = |u: usize| {
        let run = SamplerRun::new(&prior, &s, &traj, Shape::Vector(2))
            .with_known(&known, &mask)
            .with_resample(u);
        let xs: Vec<f64> = sample_batch(&run, Variant::RepaintDdim, 2000, 44, 0)
            .unwrap()
            .iter()
            .map(|g| g.as_slice()[1])
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let mae = xs.iter().map(|x| (x - target).abs()).sum::<f64>() / xs.len() as f64;
        (mean, mae)
    };
    let (mean20, mae20) = stats(20);
    let (mean1, mae1) = stats(1);
    check(
        (mean20 - target).abs() < 0.1 && mae20 <= mae1,
        format!("U=20 mean {mean20:.4} (target {target}), MAE U=20 {mae20:.4} vs U=1 {mae1:.4} (U=1 mean {mean1:.4})"),
    )
}

/// Exact terminal variance of each sampler for a standard-normal prior, by
/// propagating the variance through the linear reverse updates.
fn analytic_variance(variant: Variant, s: &DiffusionSchedule, traj: &Trajectory) -> f64 {
    let mut v = 1.0;
    for (t, tp) in traj.pairs() {
        let (ab, abp) = (s.alpha_bar(t), s.alpha_bar(tp));
        if variant == Variant::Ddpm {
            let beta = 1.0 - ab / abp;
            let noise = if t > 1 { beta * (1.0 - abp) / (1.0 - ab) } else { 0.0 };
            v = (1.0 - beta) * v + noise;
        } else {
            let c = (abp * ab).sqrt() + ((1.0 - abp) * (1.0 - ab)).sqrt();
            v *= c * c;
        }
    }
    v
}

fn unconditional_statistics() -> Outcome {
    let prior = GaussianMixture::standard_normal(1);
    let mut details = Vec::new();
    let mut ok = true;
    let runs = [
        (
            "DDPM T=100",
            Variant::Ddpm,
            DiffusionSchedule::linear(100, 1e-4, 0.02).unwrap(),
            Trajectory::full(100).unwrap(),
        ),
        (
            "DDIM 50/1000",
            Variant::Ddim,
            default_schedule(),
            Trajectory::uniform(1000, 50).unwrap(),
        ),
    ];
    for (name, variant, s, traj) in runs {
        let run = SamplerRun::new(&prior, &s, &traj, Shape::Vector(1));
        let samples = sample_batch(&run, variant, 10_000, 55, 0).unwrap();
        let m = sample_moments(&samples).unwrap();
        let (mean, var) = (m.mean.as_slice()[0], m.variance.as_slice()[0]);
        ok &= mean.abs() < 0.04 && (var - 1.0).abs() < 0.05;
        details.push(format!(
            "{name}: mean {mean:+.4}, var {var:.4} (exact for this discretization {:.4})",
            analytic_variance(variant, &s, &traj)
        ));
    }
    check(ok, details.join("; "))
}

fn random_layers(rng: &mut ChaCha8Rng, widths: &[usize]) -> MlpParams {
    let layers = widths
        .windows(2)
        .map(|w| {
            let weights = (0..w[0] * w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let biases = (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect();
            Layer::new(w[1], w[0], weights, biases).unwrap()
        })
        .collect();
    MlpParams::from_layers(layers).unwrap()
}

fn gradient_check() -> Outcome {
    let s = DiffusionSchedule::linear(100, 1e-3, 0.2).unwrap();
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for net in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + net);
        let dim = 2;
        let widths = if net % 2 == 0 {
            vec![dim + 2, 4, dim]
        } else {
            vec![dim + 2, 4, 3, dim]
        };
        let params = random_layers(&mut rng, &widths);
        let examples: Vec<NoisedExample> = (0..4)
            .map(|_| NoisedExample {
                x0: Grid::from_fn(Shape::Vector(dim), |_| rng.gen_range(-1.0..1.0)),
                t: rng.gen_range(1..=100),
                eps: Grid::from_fn(Shape::Vector(dim), |_| rng.sample(StandardNormal)),
            })
            .collect();
        let (_, grads) = loss_and_grad_on(&params, &examples, &s, 1).unwrap();
        let analytic: Vec<f64> = grads.params().copied().collect();
        let loss_at = |p: &MlpParams| loss_and_grad_on(p, &examples, &s, 1).unwrap().0;
        for (k, a) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    check(
        worst < 1e-4,
        format!("{checked} parameters over 20 networks, max relative error {worst:.2e}"),
    )
}

fn end_to_end() -> Outcome {
    let phantom = PhantomConfig::small();
    let truncation = TruncationConfig {
        tci_range: (0.05, 0.3),
        ..TruncationConfig::default()
    };
    let s = default_schedule();
    let data = phantom_images(1, 2000, &phantom, 0).unwrap();
    // The default 128-wide hidden layers are narrower than the 256-pixel
    // image and cannot carry the near-identity map needed at high noise.
    let config = TrainConfig {
        hidden: vec![256, 256],
        log_every: 0,
        ..TrainConfig::default()
    };
    let trained = train(&data, &config, &s).unwrap();
    let denoiser = MlpDenoiser::new(trained.params);
    let cases = simulate_cases(2, 50, &phantom, &truncation, 0).unwrap();
    let traj = Trajectory::uniform(1000, 50).unwrap();
    let records = map_indexed(cases.len(), 0, |i| {
        let case = &cases[i];
        let run = SamplerRun::new(&denoiser, &s, &traj, phantom.shape())
            .with_known(&case.truncated, &case.truncation.mask)
            .with_resample(20);
        let completed = repaint_ddim(&run, &mut NoiseStream::new(3, i as u64)).unwrap();
        case_record(
            &case.id,
            case.truncation.tci,
            &case.phantom.image,
            &case.truncated,
            &completed,
            phantom.fat_band,
        )
    })
    .into_iter()
    .collect::<fovdiff::Result<Vec<_>>>()
    .unwrap();
    let report = AgreementReport::build(records, &DEFAULT_TCI_EDGES).unwrap();
    let trunc = report.overall.truncated_mae.unwrap();
    let comp = report.overall.completed_mae.unwrap();
    let reduction = 1.0 - comp / trunc;
    let bins: Vec<String> = report
        .bins
        .iter()
        .filter(|b| b.stats.count > 0)
        .map(|b| {
            format!(
                "[{}, {}) n={} {:.2} -> {:.2}",
                b.lower,
                b.upper,
                b.stats.count,
                b.stats.truncated_mae.unwrap(),
                b.stats.completed_mae.unwrap()
            )
        })
        .collect();
    check(
        comp < trunc,
        format!(
            "SAT MAE truncated {trunc:.2} px -> completed {comp:.2} px, reduction {:.0}% (target 50%, {}); bins: {}",
            100.0 * reduction,
            if reduction >= 0.5 { "met" } else { "not met" },
            bins.join(", ")
        ),
    )
}

fn random_finite(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = match rng.gen_range(0..4) {
            0 => f64::from_bits(rng.gen()),
            1 => rng.gen_range(-1e6..1e6),
            2 => rng.sample::<f64, _>(StandardNormal) * 1e-300,
            _ => rng.sample(StandardNormal),
        };
        if v.is_finite() {
            return v;
        }
    }
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let shape = if rng.gen_bool(0.5) {
            Shape::Vector(rng.gen_range(0..50))
        } else {
            Shape::image(rng.gen_range(1..20), rng.gen_range(1..20))
        };
        let dtype = if rng.gen_bool(0.5) { Dtype::F64 } else { Dtype::F32 };
        let grid = Grid::from_fn(shape, |_| {
            let v = if rng.gen_bool(0.05) {
                f64::from_bits(rng.gen())
            } else {
                random_finite(&mut rng)
            };
            if dtype == Dtype::F32 {
                v as f32 as f64
            } else {
                v
            }
        });
        let mut buf = Vec::new();
        write_grid(&mut buf, &grid, dtype).unwrap();
        let (back, back_dtype) = read_grid(buf.as_slice()).unwrap();
        if !back.bitwise_eq(&grid) || back_dtype != dtype {
            failures.push(format!("grid case {case}"));
        }

        let dim = rng.gen_range(1..6);
        let mut widths = vec![dim + 2 * rng.gen_range(1..4)];
        widths.extend((0..rng.gen_range(0..3)).map(|_| rng.gen_range(1..6)));
        widths.push(dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let weights = (0..w[0] * w[1]).map(|_| random_finite(&mut rng)).collect();
                let biases = (0..w[1]).map(|_| random_finite(&mut rng)).collect();
                Layer::new(w[1], w[0], weights, biases).unwrap()
            })
            .collect();
        let params = MlpParams::from_layers(layers).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&params, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        if !params
            .params()
            .zip(back.params())
            .all(|(a, b)| a.to_bits() == b.to_bits())
            || params.param_count() != back.param_count()
        {
            failures.push(format!("checkpoint case {case}"));
        }

        let records: Vec<SampleRecord> = (0..rng.gen_range(1..30))
            .map(|i| SampleRecord {
                id: format!("c{case}-{i}"),
                tci: rng.gen_range(0.0..=1.0),
                sat_true: random_finite(&mut rng),
                sat_truncated: random_finite(&mut rng),
                sat_completed: random_finite(&mut rng),
            })
            .collect();
        let report = AgreementReport::build(records, &DEFAULT_TCI_EDGES).unwrap();
        let mut json = Vec::new();
        write_report_json(&report, &mut json).unwrap();
        let mut csv = Vec::new();
        write_records_csv(&report.records, &mut csv).unwrap();
        if read_report_json(json.as_slice()).unwrap() != report {
            failures.push(format!("report json case {case}"));
        }
        let back = read_records_csv(csv.as_slice()).unwrap();
        let exact = back.len() == report.records.len()
            && back.iter().zip(&report.records).all(|(a, b)| {
                a.id == b.id
                    && [a.tci, a.sat_true, a.sat_truncated, a.sat_completed]
                        .iter()
                        .zip([b.tci, b.sat_true, b.sat_truncated, b.sat_completed])
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            });
        if !exact {
            failures.push(format!("report csv case {case}"));
        }
    }
    check(
        failures.is_empty(),
        format!("1000 cases each of grid, checkpoint, report JSON and CSV; failures: {failures:?}"),
    )
}

struct Criterion {
    number: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            number: 1,
            name: "schedule correctness",
            budget: Duration::from_secs(1),
            run: schedule_correctness,
        },
        Criterion {
            number: 2,
            name: "reduction identity",
            budget: Duration::from_secs(10),
            run: reduction_identity,
        },
        Criterion {
            number: 3,
            name: "known-region exactness",
            budget: Duration::from_secs(120),
            run: known_region_exactness,
        },
        Criterion {
            number: 4,
            name: "conditional-sampling oracle",
            budget: Duration::from_secs(120),
            run: conditional_oracle,
        },
        Criterion {
            number: 5,
            name: "unconditional sampler statistics",
            budget: Duration::from_secs(120),
            run: unconditional_statistics,
        },
        Criterion {
            number: 6,
            name: "gradient check",
            budget: Duration::from_secs(60),
            run: gradient_check,
        },
        Criterion {
            number: 7,
            name: "end-to-end SAT correction",
            budget: Duration::from_secs(900),
            run: end_to_end,
        },
        Criterion {
            number: 8,
            name: "format round-trips",
            budget: Duration::from_secs(30),
            run: format_round_trips,
        },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.number))
    {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {} {:<34} {} ({:.2}s of {}s): {}",
            c.number,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
