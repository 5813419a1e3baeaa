//! Dense exact-diagonalization toolkit for studying how measurement-like
//! records equilibrate in closed quantum systems.
//!
//! The crate is organized around five layers:
//!
//! - [`qops`]: complex operators, tensor algebra, Hermitian eigensystems
//!   with degeneracy clustering, and state distance measures.
//! - [`states`]: density matrices on explicitly factorized Hilbert spaces,
//!   pointer-basis bookkeeping, and seeded random state generation.
//! - [`hamiltonians`]: builders for conditional, star, and von Neumann
//!   coupling structures plus spectrum diagnostics.
//! - [`equilibration`]: pinching maps, finite-time averages, effective
//!   dimension, and equilibration-on-average bound checks.
//! - [`objectivity`]: conditional-state extraction and the broadcast
//!   structure diagnostics (fidelity matrices, eta/gamma decay constants,
//!   classical-quantum distance, faithfulness).

pub mod equilibration;
pub mod error;
pub mod hamiltonians;
pub mod objectivity;
pub mod qops;
pub mod states;
pub mod tol;

pub use error::{Error, Result};
pub use qops::{ComplexOperator, SpectralDecomposition};
pub use states::{DensityMatrix, HilbertFactorization, PointerBasis};
