use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fairlayout::citygrid::{generate_synthetic_city, GeneratorConfig};
use fairlayout::metrics::evaluate;
use fairlayout::sampler::{sample, SamplerConfig};
use fairlayout_bench::{desk_model, eval_city, region_inputs};

const HIDDEN: usize = 32;

fn benches(c: &mut Criterion) {
    let ds = eval_city();
    let model = desk_model(ds.k_cat(), HIDDEN);
    let r = region_inputs(&ds, 0, HIDDEN);

    c.bench_function("synth_city_16", |b| {
        b.iter(|| generate_synthetic_city(&GeneratorConfig { regions: 16, ..Default::default() }, black_box(1)))
    });
    c.bench_function("evaluate_16", |b| b.iter(|| evaluate(black_box(&ds), &ds).unwrap()));
    c.bench_function("predict_noise_desk", |b| {
        b.iter(|| model.predict_noise(black_box(&r.x), &r.a, 0.5, &r.condition, &r.condition_graph).unwrap())
    });
    let mut group = c.benchmark_group("sampling");
    group.sample_size(10);
    let cfg = SamplerConfig {
        steps: 20,
        ..Default::default()
    };
    group.bench_function("dpm3_20_nfe", |b| {
        b.iter(|| sample(&model, &r.condition, &r.condition_graph, &r.template, &cfg, 3).unwrap())
    });
    group.finish();
}

criterion_group!(bench_group, benches);
criterion_main!(bench_group);
