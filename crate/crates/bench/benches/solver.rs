use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracstep_bench::PlasmaFixture;
use fracstep_core::splitting::Stepper;
use fracstep_core::assemble_g;

const SIZES: [usize; 3] = [40, 160, 640];

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble_g");
    for m in SIZES {
        let f = PlasmaFixture::new(m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &f, |b, f| {
            b.iter(|| {
                assemble_g(&f.model.system, black_box(&f.state), f.tau, &f.grid, &f.scheme, &f.model.bv, f.tau).unwrap()
            })
        });
    }
    g.finish();
}

fn banded_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("banded_lu");
    for m in SIZES {
        let f = PlasmaFixture::new(m);
        let op = assemble_g(&f.model.system, &f.state, f.tau, &f.grid, &f.scheme, &f.model.bv, f.tau).unwrap();
        g.bench_with_input(BenchmarkId::new("factor", m), &op, |b, op| b.iter(|| op.matrix.factor().unwrap()));
        let lu = op.matrix.factor().unwrap();
        let rhs = vec![1.0; op.matrix.dim()];
        g.bench_with_input(BenchmarkId::new("solve", m), &lu, |b, lu| b.iter(|| lu.solve(black_box(&rhs)).unwrap()));
    }
    g.finish();
}

fn steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("step");
    for m in SIZES {
        let f = PlasmaFixture::new(m);
        let st = Stepper::new(&f.model.system, &f.grid, &f.scheme, &f.model.bv, f.tau).unwrap();
        g.bench_with_input(BenchmarkId::new("full", m), &f, |b, f| {
            b.iter(|| st.step_full(black_box(&f.state), &f.source, f.tau).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("split", m), &f, |b, f| {
            b.iter(|| st.step_split(black_box(&f.state), &f.source, f.tau).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, assembly, banded_solve, steps);
criterion_main!(benches);
