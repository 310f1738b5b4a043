use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use marband::bandwidth::select_bandwidths;
use marband::{fit_proposed, run_study, BandSettings, BandwidthSpec, CvConfig, Execution, MissingModel, SimConfig};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_proposed");
    for n in [200usize, 1000] {
        let config = SimConfig::new(n, MissingModel::A, 1, 11);
        let (_, sample, eps) = config.draw(0).unwrap();
        let bw = BandwidthSpec::new(0.30, 0.25).unwrap();
        for (name, execution) in STRATEGIES {
            let settings = BandSettings {
                execution,
                ..BandSettings::default()
            };
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| fit_proposed(black_box(&sample), &bw, &eps, &settings).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_cv(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_bandwidths");
    group.sample_size(10);
    let config = SimConfig::new(500, MissingModel::B, 1, 3);
    let (_, sample, eps) = config.draw(0).unwrap();
    let cv = CvConfig::default();
    for (name, execution) in STRATEGIES {
        group.bench_function(name, |b| {
            b.iter(|| select_bandwidths(black_box(&sample), config.kernel, &eps, &cv, execution).unwrap())
        });
    }
    group.finish();
}

fn bench_study(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_study");
    group.sample_size(10);
    let config = SimConfig::new(500, MissingModel::A, 32, 7);
    for (name, execution) in STRATEGIES {
        group.bench_function(name, |b| b.iter(|| run_study(black_box(&config), execution).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_fit, bench_cv, bench_study);
criterion_main!(benches);
