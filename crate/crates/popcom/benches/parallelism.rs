//! Compares the rayon data-parallel path against the sequential fallback
//! on the two hot loops: covariance construction and EM iterations. Both
//! paths produce bitwise-identical results; only throughput differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use popcom::inference::{fit, FitConfig};
use popcom::kernel::{build_covariance, KernelParams};
use popcom::parallel::force_sequential;
use popcom::sampler::{make_separable_content, sample_network, GenerativeConfig, OutDegree};

fn bench_covariance(c: &mut Criterion) {
    let (content, _) = make_separable_content(500, 3, 30, 4.0, 7).unwrap();
    let params = KernelParams {
        theta: 2.0,
        sigma2: 20.0,
        ..Default::default()
    };
    let mut group = c.benchmark_group("covariance_build_n500");
    group.sample_size(10);
    for (name, sequential) in [("parallel", false), ("sequential", true)] {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            force_sequential(sequential);
            b.iter(|| build_covariance(&content, &params).unwrap());
            force_sequential(false);
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let (content, _) = make_separable_content(150, 3, 4, 12.0, 9).unwrap();
    let kp = KernelParams {
        theta: 16.0,
        sigma2: 60.0,
        ..Default::default()
    };
    let gen = GenerativeConfig {
        nodes: 150,
        communities: 3,
        popularity_shape: 0.5,
        popularity_rate: 0.5,
        out_degree: OutDegree::Constant(15),
        kernel: kp,
        seed: 5,
        exclude_self_links: false,
    };
    let (network, _) = sample_network(&gen, &content).unwrap();
    let kernel = build_covariance(&content, &kp).unwrap();
    let mut cfg = FitConfig::new(3);
    cfg.max_iters = 5;

    let mut group = c.benchmark_group("em_5_iterations_n150_k3");
    group.sample_size(10);
    for (name, sequential) in [("parallel", false), ("sequential", true)] {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            force_sequential(sequential);
            b.iter(|| fit(&network, &content, &kernel, &cfg).unwrap());
            force_sequential(false);
        });
    }
    group.finish();
}

criterion_group!(benches, bench_covariance, bench_fit);
criterion_main!(benches);
