use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pacram::config::RunConfig;
use pacram::sim::Workload;
use pacram::sweep::{run_sweep_sequential, sweep_points};

const CONFIG: &str = r#"
seed = 3
mitigation = "graphene"
nrh = 1024

[pacram]
enabled = true
profile = "H5"
level = 0.27

[workload]
instructions = 1_000_000_000
warmup = 0
max_activations = 20_000

[workload.attack]
bank = 0
victim = 1000

[sweep]
nrh = [1024, 256, 64]
mechanisms = ["graphene", "hydra", "rfm", "prac"]
baseline = true
"#;

fn bench_sweep(c: &mut Criterion) {
    let cfg = RunConfig::from_toml(CONFIG, Path::new("bench.toml")).unwrap();
    cfg.validate().unwrap();
    let workload = Workload::from_config(&cfg).unwrap();
    let points = sweep_points(&cfg).unwrap();

    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("sequential", points.len()), |b| {
        b.iter(|| run_sweep_sequential(&cfg, &workload, &points, false).unwrap())
    });
    #[cfg(feature = "parallel")]
    g.bench_function(BenchmarkId::new("parallel", points.len()), |b| {
        b.iter(|| pacram::sweep::run_sweep_parallel(&cfg, &workload, &points, false).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
