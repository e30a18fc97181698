// Scalar kernels on the critical path of every check, plus one fixed-size
// torus integral. The canonical double-integral configs stand or fall with
// these costs: a 256^2 grid pays the integrand price 65536 times.

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use std::hint::black_box;

use ellg2::g2_structure::LogPoint;
use ellg2::integrand::{phi, ParameterSet};
use ellg2::quadrature::grid_average_2d;
use ellg2::special_functions::{
    e_pair, elliptic_gamma, qpoch_inf, theta, Nome, DEFAULT_TRUNC_TOL,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn canonical() -> (ParameterSet, Nome) {
    let nome = Nome::real(0.08, 0.22).unwrap();
    let a = [c(0.70, 0.0), c(0.72, 0.0), c(0.68, 0.0), c(0.66, 0.0)];
    (ParameterSet::make_balanced(a, 1, &nome).unwrap(), nome)
}

fn scalar_kernels(cr: &mut Criterion) {
    let nome = Nome::real(0.08, 0.22).unwrap();
    let u = c(0.57, 0.21);
    cr.bench_function("qpoch_inf", |b| {
        b.iter(|| qpoch_inf(black_box(u), black_box(nome.q), DEFAULT_TRUNC_TOL).unwrap())
    });
    cr.bench_function("theta", |b| {
        b.iter(|| theta(black_box(u), black_box(nome.p)).unwrap())
    });
    cr.bench_function("elliptic_gamma", |b| {
        b.iter(|| elliptic_gamma(black_box(u), &nome).unwrap())
    });
    cr.bench_function("e_pair", |b| {
        b.iter(|| e_pair(black_box(u), black_box(c(0.4, -0.1)), black_box(nome.p)).unwrap())
    });
}

fn integrand_kernels(cr: &mut Criterion) {
    let (aset, nome) = canonical();
    let zeta = LogPoint::real(0.137, 0.611);
    cr.bench_function("phi_at_node", |b| {
        b.iter(|| phi(&aset, black_box(zeta), &nome).unwrap())
    });

    let mut g = cr.benchmark_group("quadrature");
    g.sample_size(10);
    g.bench_function("grid_average_32", |b| {
        let f = |z: LogPoint| phi(&aset, z, &nome);
        b.iter(|| grid_average_2d(&f, black_box(32)).unwrap())
    });
    g.finish();
}

criterion_group!(kernels, scalar_kernels, integrand_kernels);
criterion_main!(kernels);
