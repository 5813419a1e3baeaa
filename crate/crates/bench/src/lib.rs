//! Shared fixtures for the criterion benchmarks.

use sbs_core::hamiltonians::{random_hermitian, ConditionalHamiltonianSpec};
use sbs_core::states::{random_density, DensityMatrix, PointerBasis};

/// A conditional coupling with GUE branches plus matching initial states.
pub fn conditional_fixture(
    d_s: usize,
    d_e: usize,
    seed: u64,
) -> (ConditionalHamiltonianSpec, DensityMatrix, DensityMatrix) {
    let spec = ConditionalHamiltonianSpec::new(
        PointerBasis::computational(d_s),
        (0..d_s)
            .map(|i| random_hermitian(d_e, seed + i as u64))
            .collect(),
    )
    .expect("valid spec");
    let rho_s0 = random_density(d_s, d_s, seed + 100).expect("valid state");
    let rho_e0 = random_density(d_e, d_e, seed + 101).expect("valid state");
    (spec, rho_s0, rho_e0)
}
