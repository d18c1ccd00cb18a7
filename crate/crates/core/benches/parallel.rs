//! Parallel vs sequential throughput on the data-parallel inner loops:
//! batch solves over independent instances, per-context solves, and the
//! Monte-Carlo estimator. Build with the default `parallel` feature; the
//! sequential baselines go through the always-sequential map.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fdpo_lab::divergence::{mc_estimate, DivergenceSpec};
use fdpo_lab::kkt::solve_optimal_policy;
use fdpo_lab::par;
use fdpo_lab::policy::{TabularPolicy, TaskSpace};
use fdpo_lab::preference::RewardTable;
use fdpo_lab::rng;
use rand::Rng;

struct Instance {
    reward: RewardTable,
    reference: TabularPolicy,
    beta: f64,
}

fn instances(n: usize) -> Vec<Instance> {
    let mut rng = rng::from_seed(7);
    (0..n)
        .map(|i| {
            let nx = rng.gen_range(2..=4);
            let ny = rng.gen_range(2..=8);
            let space = TaskSpace::uniform_weights(nx, ny).unwrap();
            let rewards: Vec<f64> = (0..nx * ny).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let logits: Vec<f64> = (0..nx * ny).map(|_| rng.gen_range(-1.5..1.5)).collect();
            Instance {
                reward: RewardTable::new(space.clone(), rewards).unwrap(),
                reference: TabularPolicy::from_logits(space, logits).unwrap(),
                beta: [0.1, 0.3, 1.0][i % 3],
            }
        })
        .collect()
}

fn bench_instance_batch(c: &mut Criterion) {
    let work = instances(256);
    let spec = DivergenceSpec::jensen_shannon();
    let solve = |inst: &Instance| {
        solve_optimal_policy(&inst.reward, &inst.reference, inst.beta, &spec)
            .unwrap()
            .residual()
    };
    let mut group = c.benchmark_group("solver_batch_256");
    group.bench_function("parallel", |b| {
        b.iter(|| par::map_indexed(&work, solve))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_indexed_seq(&work, solve))
    });
    group.finish();
}

fn bench_mc_estimator(c: &mut Criterion) {
    let mut r = rng::from_seed(11);
    let chunks: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..20_000).map(|_| r.gen_range(0.2..5.0)).collect())
        .collect();
    let spec = DivergenceSpec::alpha(0.5).unwrap();
    let run = |samples: &Vec<f64>| mc_estimate(&spec, samples).unwrap().0;
    let mut group = c.benchmark_group("mc_estimate_64x20k");
    group.bench_function("parallel", |b| {
        b.iter_batched(
            || chunks.clone(),
            |data| par::map_indexed(&data, run),
            BatchSize::LargeInput,
        )
    });
    group.bench_function("sequential", |b| {
        b.iter_batched(
            || chunks.clone(),
            |data| par::map_indexed_seq(&data, run),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_instance_batch, bench_mc_estimator);
criterion_main!(benches);
