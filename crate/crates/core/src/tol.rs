//! Central numerical tolerances.
//!
//! Validation thresholds live here so every module applies the same floors.
//! Values marked "relative" are multiplied by the spectral range of the
//! operator they apply to.

/// Max allowed elementwise |A - A^dag| for an operator to count as Hermitian.
pub const HERMITICITY: f64 = 1e-10;

/// Eigenvalues below `-PSD_FLOOR` reject a state as non-PSD; values in
/// `[-PSD_FLOOR, 0]` are clipped to 0. Silent clipping of large negative
/// eigenvalues would hide bugs.
pub const PSD_FLOOR: f64 = 1e-10;

/// Max allowed |Tr(rho) - 1|.
pub const TRACE: f64 = 1e-10;

/// Max allowed columnwise orthonormality defect for a basis matrix.
pub const UNITARITY: f64 = 1e-10;

/// Default degeneracy-clustering tolerance, relative to spectral range.
pub const CLUSTER_TOL_REL: f64 = 1e-9;

/// Default gap-coincidence tolerance, relative to spectral range.
pub const GAP_TOL_REL: f64 = 1e-8;

/// Max allowed relative Frobenius error of V diag(E) V^dag against the input.
pub const RECONSTRUCTION_REL: f64 = 1e-9;

/// Spectral weights below this are treated as exactly zero in entropies.
pub const ENTROPY_EIG_FLOOR: f64 = 1e-14;

/// Pointer branches with probability at or below this are excluded from
/// conditional-state extraction; conditional states are undefined at p = 0
/// and numerically garbage near it.
pub const P_FLOOR: f64 = 1e-12;

/// Max off-pointer-block element magnitude for a state to count as
/// classical-quantum. Equilibrium outputs carry eigensolver noise, so a
/// strict zero test would spuriously fail.
pub const OFF_BLOCK: f64 = 1e-8;

/// Initial-state overlap threshold for the degenerate-branch diagnostic.
pub const BRANCH_OVERLAP: f64 = 1e-10;

/// Commutator-norm threshold for certifying conditional structure.
pub const CQ_COMMUTATOR: f64 = 1e-9;

/// Off-pointer-block element threshold for the structural part of the
/// conditional-form certification.
pub const STRUCTURAL_OFF_BLOCK: f64 = 1e-10;

/// Overlap sums within this of 1 count as "no decay" sites when collecting
/// the exponential-decay constants.
pub const ETA_UNIT_EPS: f64 = 1e-12;

/// Max singular value of a support-projector product for supports to count
/// as orthogonal in the faithfulness check.
pub const FAITHFUL_OVERLAP: f64 = 1e-8;

/// Additive slack applied when asserting analytic inequalities numerically.
pub const BOUND_SLACK: f64 = 1e-9;
