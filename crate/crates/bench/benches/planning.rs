use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use splitshare_core::{
    brute_force_place, build_shared_catalog, generate, greedy_place, total_latency, GenParams,
};

fn placement(c: &mut Criterion) {
    let mut group = c.benchmark_group("placement");
    for modules in [2usize, 4, 6] {
        let s = generate(&GenParams {
            seed: 11,
            n_devices: 5..=5,
            n_models: 1..=1,
            encoders_per_model: modules - 1..=modules - 1,
            ..GenParams::default()
        })
        .unwrap();
        let catalog = build_shared_catalog(&s).unwrap();
        group.bench_with_input(BenchmarkId::new("greedy", modules), &s, |b, s| {
            b.iter(|| greedy_place(s, &catalog).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("brute_force", modules), &s, |b, s| {
            b.iter(|| brute_force_place(s, &catalog, &s.trace).unwrap())
        });
    }
    group.finish();
}

fn objective(c: &mut Criterion) {
    let s = generate(&GenParams {
        seed: 5,
        requests_per_model: 20..=20,
        arrival_window: 10.0,
        ..GenParams::default()
    })
    .unwrap();
    let catalog = build_shared_catalog(&s).unwrap();
    let (p, _) = greedy_place(&s, &catalog).unwrap();
    c.bench_function("total_latency", |b| b.iter(|| total_latency(&s, &p, &s.trace).unwrap()));
}

criterion_group!(benches, placement, objective);
criterion_main!(benches);
