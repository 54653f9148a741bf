use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use randcurv_bench::{sphere_h, torus_h};
use randcurv_core::excursion::{empirical_euler, estimate_p2, McOptions};
use randcurv_core::fields::{sphere_kernel, FieldKind, FieldSampler};
use randcurv_core::grid::{fibonacci_sphere, icosphere, torus_lattice};
use randcurv_core::harmonics::{legendre_all, real_harmonics, unit_vector};

fn harmonics(c: &mut Criterion) {
    let mut g = c.benchmark_group("harmonics");
    for l in [12usize, 40] {
        g.bench_with_input(BenchmarkId::new("legendre_all", l), &l, |b, &l| {
            b.iter(|| legendre_all(l, black_box(0.37)))
        });
        let p = unit_vector(1.1, 0.4);
        g.bench_with_input(BenchmarkId::new("real_harmonics", l), &l, |b, &l| {
            b.iter(|| real_harmonics(l, black_box(p), false))
        });
    }
    let spec = sphere_h(12);
    g.bench_function("sphere_kernel", |b| b.iter(|| sphere_kernel(&spec, black_box(0.8))));
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("sampling");
    let spec = sphere_h(12);
    let grid = fibonacci_sphere(4096).unwrap();
    let sampler = FieldSampler::new(&spec, &grid, false).unwrap();
    g.bench_function("sphere_batch_64", |b| {
        let mut first = 0;
        b.iter(|| {
            first += 64;
            sampler.target(&sampler.normals_batch(1, first, 64))
        })
    });
    let torus = torus_h(20);
    let lattice = torus_lattice(64).unwrap();
    let ts = FieldSampler::new(&torus, &lattice, false).unwrap();
    g.bench_function("torus_batch_64", |b| {
        let mut first = 0;
        b.iter(|| {
            first += 64;
            ts.target(&ts.normals_batch(1, first, 64))
        })
    });
    g.sample_size(10);
    let small = fibonacci_sphere(1024).unwrap();
    let v = spec.with_kind(FieldKind::V).unwrap();
    g.bench_function("p2_1024_draws", |b| {
        b.iter(|| estimate_p2(&v, &[0.4], &small, None, &McOptions::new(1024, 3)).unwrap())
    });
    g.finish();
}

fn euler(c: &mut Criterion) {
    let mesh = icosphere(5).unwrap();
    let spec = sphere_h(12);
    let sampler = FieldSampler::new(&spec, &mesh.grid().unwrap(), false).unwrap();
    let values = sampler.sample(5, 0).values_h;
    c.bench_function("euler_depth5", |b| b.iter(|| empirical_euler(&mesh, &values, black_box(1.5))));
}

criterion_group!(benches, harmonics, sampling, euler);
criterion_main!(benches);
