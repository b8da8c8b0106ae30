use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use space_bench::{bench_model, constant_model, prompt};
use space_core::layout::build_layout;
use space_core::{ar_generate, space_generate, DecodeConfig};

fn bench_layout(c: &mut Criterion) {
    let p = prompt(32);
    let mut group = c.benchmark_group("build_layout");
    for k in [1usize, 3, 5, 8] {
        let cands = vec![3; k];
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| build_layout(black_box(&p), &cands, k, 1).unwrap())
        });
    }
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    let model = bench_model(0).unwrap();
    let tokens = prompt(48);
    c.bench_function("forward_causal_48", |b| {
        b.iter(|| model.forward_causal(black_box(&tokens)).unwrap())
    });
}

fn bench_generate(c: &mut Criterion) {
    let random = bench_model(1).unwrap();
    let constant = constant_model(5).unwrap();
    let p = prompt(8);
    let mut group = c.benchmark_group("generate_64");
    group.sample_size(20);
    let ar_cfg = DecodeConfig::greedy(1, 64);
    group.bench_function("ar", |b| b.iter(|| ar_generate(&random, &p, &ar_cfg).unwrap()));
    for k in [1usize, 3, 5] {
        let cfg = DecodeConfig::greedy(k, 64);
        group.bench_with_input(BenchmarkId::new("space_random", k), &cfg, |b, cfg| {
            b.iter(|| space_generate(&random, &p, cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("space_constant", k), &cfg, |b, cfg| {
            b.iter(|| space_generate(&constant, &p, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_layout, bench_forward, bench_generate);
criterion_main!(benches);
