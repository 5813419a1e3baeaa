//! Density matrices on explicitly factorized Hilbert spaces, pointer-basis
//! bookkeeping, and seeded random state generation.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::qops::{self, ComplexOperator, C64};
use crate::tol;

/// System-plus-observers splitting of a Hilbert space:
/// d_S (x) d_1 (x) ... (x) d_N.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HilbertFactorization {
    system_dim: usize,
    env_dims: Vec<usize>,
}

impl HilbertFactorization {
    pub fn new(system_dim: usize, env_dims: Vec<usize>) -> Result<Self> {
        if system_dim < 2 {
            return Err(Error::InvalidDims {
                reason: format!("system dimension must be >= 2, got {system_dim}"),
            });
        }
        if env_dims.is_empty() {
            return Err(Error::InvalidDims {
                reason: "at least one environment factor is required".into(),
            });
        }
        if let Some(&bad) = env_dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDims {
                reason: format!("environment factor dimensions must be >= 2, got {bad}"),
            });
        }
        let total = env_dims
            .iter()
            .try_fold(system_dim, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::DimensionOverflow {
                dim: usize::MAX,
                max_dim: qops::max_dim(),
            })?;
        if total > qops::max_dim() {
            return Err(Error::DimensionOverflow {
                dim: total,
                max_dim: qops::max_dim(),
            });
        }
        Ok(Self {
            system_dim,
            env_dims,
        })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn env_dims(&self) -> &[usize] {
        &self.env_dims
    }

    pub fn n_observers(&self) -> usize {
        self.env_dims.len()
    }

    pub fn env_dim(&self) -> usize {
        self.env_dims.iter().product()
    }

    pub fn total_dim(&self) -> usize {
        self.system_dim * self.env_dim()
    }

    /// Factor dimensions in order: system first, then each observer.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(1 + self.env_dims.len());
        dims.push(self.system_dim);
        dims.extend_from_slice(&self.env_dims);
        dims
    }
}

/// A Hermitian, PSD, unit-trace operator together with the factor dimensions
/// of the space it lives on (a single factor for unstructured states).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    op: ComplexOperator,
    dims: Vec<usize>,
}

impl DensityMatrix {
    /// Validating constructor: checks factorization consistency, Hermiticity,
    /// unit trace, and positive semi-definiteness.
    pub fn new(op: ComplexOperator, dims: Vec<usize>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if total != op.dim() || dims.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                got: total,
            });
        }
        op.ensure_hermitian(tol::HERMITICITY)?;
        let trace = op.trace();
        if (trace.re - 1.0).abs() > tol::TRACE || trace.im.abs() > tol::TRACE {
            return Err(Error::InvalidTrace { trace: trace.re });
        }
        let min_eig = qops::hermitian_eigenvalues(&op)?
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eig < -tol::PSD_FLOOR {
            return Err(Error::NotPsd {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self { op, dims })
    }

    /// Single-factor state.
    pub fn new_flat(op: ComplexOperator) -> Result<Self> {
        let dim = op.dim();
        Self::new(op, vec![dim])
    }

    /// Construction path for operators that carry the invariants by
    /// construction (pinching outputs, convex mixtures of valid states);
    /// skips the O(d^3) eigenvalue check.
    pub(crate) fn from_trusted(op: ComplexOperator, dims: Vec<usize>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), op.dim());
        Self { op, dims }
    }

    /// |psi><psi| from a (not necessarily normalized) ket.
    pub fn pure(ket: &Array1<C64>, dims: Vec<usize>) -> Result<Self> {
        let norm_sq: f64 = ket.iter().map(|z| z.norm_sqr()).sum();
        if norm_sq <= 0.0 {
            return Err(Error::InvalidDims {
                reason: "cannot normalize the zero vector".into(),
            });
        }
        let op = qops::outer_product(ket).scale_real(1.0 / norm_sq);
        Self::new(op, dims)
    }

    /// Computational basis state |k><k|.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidDims {
                reason: format!("basis index {k} out of range for dimension {dim}"),
            });
        }
        let mut ket = Array1::zeros(dim);
        ket[k] = C64::new(1.0, 0.0);
        Self::pure(&ket, vec![dim])
    }

    /// Maximally mixed state 1/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            op: ComplexOperator::identity(dim).scale_real(1.0 / dim as f64),
            dims: vec![dim],
        }
    }

    pub fn op(&self) -> &ComplexOperator {
        &self.op
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Reinterpret the same operator with a different factorization.
    pub fn with_dims(&self, dims: Vec<usize>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if total != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: total,
            });
        }
        Ok(Self {
            op: self.op.clone(),
            dims,
        })
    }

    pub fn purity(&self) -> f64 {
        self.op.dot(&self.op).trace().re
    }

    /// Re-run the construction checks (used by tests on trusted outputs).
    pub fn validate(&self) -> Result<()> {
        Self::new(self.op.clone(), self.dims.clone()).map(|_| ())
    }

    /// Reduced state on the kept factors.
    pub fn reduce(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let reduced = qops::partial_trace(&self.op, &self.dims, keep)?;
        let mut keep_sorted: Vec<usize> = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        let dims = keep_sorted.iter().map(|&k| self.dims[k]).collect();
        Ok(DensityMatrix::from_trusted(reduced.symmetrized(), dims))
    }
}

/// Orthonormal measurement basis on the system factor, stored as the unitary
/// whose columns are the basis kets. Defaults to the computational basis;
/// pointer-indexed quantities are computed in whatever frame is supplied.
#[derive(Debug, Clone)]
pub struct PointerBasis {
    matrix: ComplexOperator,
}

impl PointerBasis {
    pub fn computational(dim: usize) -> Self {
        Self {
            matrix: ComplexOperator::identity(dim),
        }
    }

    /// Basis from a unitary; columns must be orthonormal within tolerance.
    pub fn from_unitary(matrix: ComplexOperator) -> Result<Self> {
        let gram = matrix.adjoint().dot(&matrix);
        let defect = gram.sub(&ComplexOperator::identity(matrix.dim())).max_abs_entry();
        if defect > tol::UNITARITY {
            return Err(Error::InvalidDims {
                reason: format!("pointer basis is not unitary (defect {defect:e})"),
            });
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexOperator {
        &self.matrix
    }

    /// Basis ket |b_i>.
    pub fn ket(&self, i: usize) -> Array1<C64> {
        let d = self.dim();
        Array1::from_shape_fn(d, |r| self.matrix.get(r, i))
    }

    /// Projector |b_i><b_i|.
    pub fn projector(&self, i: usize) -> ComplexOperator {
        qops::outer_product(&self.ket(i))
    }

    /// True when the basis is exactly the computational one (fast paths).
    pub fn is_computational(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| {
            (0..d).all(|j| {
                let expect = if i == j { 1.0 } else { 0.0 };
                self.matrix.get(i, j) == C64::new(expect, 0.0)
            })
        })
    }
}

/// Diagonal of the system state in the pointer basis; entries are clipped at
/// zero from below.
pub fn pointer_probabilities(rho_s: &DensityMatrix, basis: &PointerBasis) -> Result<Vec<f64>> {
    if rho_s.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: rho_s.dim(),
        });
    }
    let rotated = basis.matrix().adjoint().dot(rho_s.op()).dot(basis.matrix());
    Ok((0..basis.dim()).map(|i| rotated.get(i, i).re.max(0.0)).collect())
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Rank-`rank` Wishart-style state G G^dag / Tr(G G^dag) with G a dim x rank
/// complex standard-Gaussian matrix drawn from the given generator.
pub fn random_density_with(dim: usize, rank: usize, rng: &mut impl Rng) -> Result<DensityMatrix> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidRank { rank, dim });
    }
    let g = Array2::from_shape_fn((dim, rank), |_| complex_gaussian(rng));
    let mut data: Array2<C64> = Array2::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..rank {
                acc += g[(i, r)] * g[(j, r)].conj();
            }
            data[(i, j)] = acc;
        }
    }
    let trace: f64 = (0..dim).map(|i| data[(i, i)].re).sum();
    let op = ComplexOperator::from_array(data.mapv(|z| z / trace))?.symmetrized();
    Ok(DensityMatrix::from_trusted(op, vec![dim]))
}

/// Seeded, deterministic version of [`random_density_with`].
pub fn random_density(dim: usize, rank: usize, seed: u64) -> Result<DensityMatrix> {
    let mut rng = seeded_rng(seed);
    random_density_with(dim, rank, &mut rng)
}

/// Deterministic uniform draws in [lo, hi) for experiment parameters.
pub fn seeded_uniforms(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Tensor product of states with concatenated factorization metadata.
pub fn product_state(parts: &[DensityMatrix]) -> Result<DensityMatrix> {
    let (first, rest) = parts.split_first().ok_or(Error::InvalidDims {
        reason: "product_state requires at least one part".into(),
    })?;
    let mut op = first.op().clone();
    let mut dims = first.dims().to_vec();
    for part in rest {
        op = qops::tensor(&op, part.op())?;
        dims.extend_from_slice(part.dims());
    }
    Ok(DensityMatrix::from_trusted(op, dims))
}
