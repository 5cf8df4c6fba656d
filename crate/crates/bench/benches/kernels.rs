use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use micromag_bench::fixture;
use micromag_core::demag::stray_field;
use micromag_core::linop::assemble_matrix;
use micromag_core::llg::{default_dt, evolve, llg_rhs, LlgMode, Sampling};
use micromag_core::{build_kernel, Grid, ShapeSpec, TangentFrame};
use std::hint::black_box;

fn stray(c: &mut Criterion) {
    let mut group = c.benchmark_group("stray_field");
    for n in [[16, 8, 8], [32, 16, 16]] {
        let f = fixture(n);
        group.bench_with_input(BenchmarkId::from_parameter(n[0]), &f, |b, f| {
            b.iter(|| stray_field(black_box(&f.m), &f.kernel).unwrap())
        });
    }
    group.finish();
}

fn kernel_build(c: &mut Criterion) {
    let g = Grid::build(ShapeSpec::prolate_spheroid(), [16, 8, 8]).unwrap();
    c.bench_function("build_kernel/16", |b| b.iter(|| build_kernel(black_box(&g))));
}

fn rhs(c: &mut Criterion) {
    let f = fixture([16, 8, 8]);
    c.bench_function("llg_rhs/16", |b| {
        b.iter(|| llg_rhs(black_box(&f.m), &f.grid, 0.3, &f.params, &f.kernel).unwrap())
    });
    let dt = default_dt(&f.grid, &f.params, LlgMode::Full);
    c.bench_function("rk4_10_steps/16", |b| {
        b.iter(|| {
            evolve(&f.m, &f.grid, 0.0, 10.0 * dt, &f.params, &f.kernel, dt, &Sampling::endpoints(), LlgMode::Full)
                .unwrap()
        })
    });
}

fn assembly(c: &mut Criterion) {
    let f = fixture([8, 4, 4]);
    let frame = TangentFrame::build(&f.m).unwrap();
    let mut group = c.benchmark_group("assemble_matrix");
    group.sample_size(10);
    group.bench_function("8x4x4", |b| {
        b.iter(|| assemble_matrix(&f.m, &f.grid, &f.params, &f.kernel, black_box(&frame)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, stray, kernel_build, rhs, assembly);
criterion_main!(benches);
