use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vilbench::batch::{bit_flip_sweep, bit_flip_sweep_sequential, random_control_frames, run_batch, run_batch_sequential};
use vilbench::harness::{ScenarioConfig, StageConfig};

fn scenario_batch(c: &mut Criterion) {
    let jobs: Vec<ScenarioConfig> = (0..32)
        .map(|i| ScenarioConfig::emergency_brake(10.0 + 0.03 * i as f64).with_seed(i))
        .collect();
    let stage = StageConfig::internal();
    let mut g = c.benchmark_group("eb_batch_32");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", jobs.len()), |b| b.iter(|| run_batch(&jobs, &stage)));
    g.bench_function(BenchmarkId::new("sequential", jobs.len()), |b| {
        b.iter(|| run_batch_sequential(&jobs, &stage))
    });
    g.finish();
}

fn bit_flips(c: &mut Criterion) {
    let frames = random_control_frames(1, 100);
    let mut g = c.benchmark_group("bit_flip_100_frames");
    g.bench_function("parallel", |b| b.iter(|| bit_flip_sweep(&frames)));
    g.bench_function("sequential", |b| b.iter(|| bit_flip_sweep_sequential(&frames)));
    g.finish();
}

criterion_group!(benches, scenario_batch, bit_flips);
criterion_main!(benches);
