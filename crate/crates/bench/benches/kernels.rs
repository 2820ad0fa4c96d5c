use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use wolfflab_core::suite::MeasureKind;
use wolfflab_core::{
    a_star, energy_audit, make_params, run_iteration, solve_ibvp, wolff_potential, CutoffPair, Cylinder, GridField,
    GridSpec, IterationOptions, IterationParams, Point, ProblemParams, RadonMeasure, WolffExponents,
};

fn solved(n: usize, p: f64, kind: MeasureKind, nx: usize, nt: usize) -> (GridField, RadonMeasure, ProblemParams) {
    let params = make_params(n, p, 1e-6, None, None).unwrap();
    let m = kind.build(n, 1.0).unwrap();
    let g = GridSpec::new(n, nx, nt, 1.0, 1.0).unwrap();
    (solve_ibvp(&m, &params, &g).unwrap(), m, params)
}

fn wolff(c: &mut Criterion) {
    let mut group = c.benchmark_group("wolff_potential");
    for kind in [MeasureKind::TwoAtom, MeasureKind::Annular, MeasureKind::Uniform] {
        let m = kind.build(2, 1.0).unwrap();
        let exps = WolffExponents::new(2, 1.6).unwrap();
        let x = Point::new(&[0.13, 0.07]);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{kind:?}")), &m, |b, m| {
            b.iter(|| wolff_potential(m, exps, black_box(&x), 0.5, 1e-9).unwrap())
        });
    }
    group.finish();
}

fn mollify(c: &mut Criterion) {
    let m = MeasureKind::Annular.build(2, 1.0).unwrap();
    let g = GridSpec::new(2, 65, 1, 1.0, 1.0).unwrap();
    c.bench_function("mollify_to_grid/2d_65", |b| {
        b.iter(|| m.mollify_to_grid(black_box(&g), 2.0 * g.h()).unwrap())
    });
}

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_ibvp");
    group.sample_size(10);
    let cases = [(1, 65, 64, 1.5), (1, 129, 128, 1.2), (2, 17, 16, 1.8)];
    for (n, nx, nt, p) in cases {
        let params = make_params(n, p, 1e-6, None, None).unwrap();
        let m = RadonMeasure::dirac(Point::origin(n), 1.0, 1.0).unwrap();
        let g = GridSpec::new(n, nx, nt, 1.0, 1.0).unwrap();
        group.bench_function(format!("n{n}_p{p}_{nx}x{nt}"), |b| {
            b.iter(|| solve_ibvp(&m, &params, black_box(&g)).unwrap())
        });
    }
    group.finish();
}

fn functionals(c: &mut Criterion) {
    let (u, m, params) = solved(1, 1.5, MeasureKind::TwoAtom, 129, 128);
    let cyl = Cylinder::new(Point::new(&[0.1]), 0.5, 0.25, 0.5).unwrap();
    let cut = CutoffPair::new(u.grid(), &cyl, &params).unwrap();
    c.bench_function("a_star/1d_129", |b| {
        b.iter(|| a_star(&u, &cyl, black_box(0.1), cyl.delta, &cut, &params).unwrap())
    });
    c.bench_function("energy_audit/1d_129", |b| {
        b.iter(|| energy_audit(&u, &cyl, black_box(0.1), cyl.delta, &cut, &m, &params).unwrap())
    });
}

fn iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_iteration");
    group.sample_size(10);
    let (u, m, params) = solved(1, 1.5, MeasureKind::Dirac, 129, 128);
    let x0 = Point::new(&[0.2]);
    let it = IterationParams::fit(&u, &params, &x0, 0.5, &IterationOptions::default()).unwrap();
    group.bench_function("1d_dirac", |b| b.iter(|| run_iteration(&u, black_box(&it), &params, &m).unwrap()));
    group.finish();
}

criterion_group!(benches, wolff, mollify, solve, functionals, iteration);
criterion_main!(benches);
