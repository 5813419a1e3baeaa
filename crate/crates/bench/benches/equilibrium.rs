use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sbs_bench::conditional_fixture;
use sbs_core::equilibration::{conditional_equilibrium, pinch_auto};
use sbs_core::hamiltonians::random_hermitian;
use sbs_core::qops::{self, fidelity, hermitian_eig_auto, partial_trace};
use sbs_core::states::{product_state, random_density};

fn bench_equilibrium_paths(c: &mut Criterion) {
    qops::set_blas_threads(1);
    let mut group = c.benchmark_group("equilibrium");
    group.sample_size(20);
    for d_e in [16usize, 64] {
        let (spec, rho_s0, rho_e0) = conditional_fixture(2, d_e, 7);
        group.bench_with_input(BenchmarkId::new("branchwise", d_e), &d_e, |b, _| {
            b.iter(|| conditional_equilibrium(&spec, &rho_s0, &rho_e0).unwrap())
        });
        let h = spec.assemble().unwrap();
        let joint = product_state(&[rho_s0.clone(), rho_e0.clone()]).unwrap();
        group.bench_with_input(BenchmarkId::new("dense_pinch", d_e), &d_e, |b, _| {
            b.iter(|| pinch_auto(&joint, &h).unwrap())
        });
    }
    group.finish();
}

fn bench_primitives(c: &mut Criterion) {
    qops::set_blas_threads(1);
    let mut group = c.benchmark_group("primitives");
    for dim in [16usize, 64] {
        let h = random_hermitian(dim, 11);
        group.bench_with_input(BenchmarkId::new("hermitian_eig", dim), &dim, |b, _| {
            b.iter(|| hermitian_eig_auto(&h).unwrap())
        });
        let rho = random_density(dim, dim, 12).unwrap();
        let sigma = random_density(dim, dim, 13).unwrap();
        group.bench_with_input(BenchmarkId::new("fidelity", dim), &dim, |b, _| {
            b.iter(|| fidelity(&rho, &sigma).unwrap())
        });
    }
    let big = random_density(256, 256, 14).unwrap();
    group.bench_function("partial_trace_256_keep_16", |b| {
        b.iter(|| partial_trace(big.op(), &[16, 16], &[0]).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_equilibrium_paths, bench_primitives);
criterion_main!(benches);
