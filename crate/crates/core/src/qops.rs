//! Dense complex linear algebra: tensor products, partial traces, Hermitian
//! eigendecomposition with degeneracy clustering, and state distance measures.
//!
//! Everything here is pure and deterministic; operators are immutable after
//! construction and safe to share across threads.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, EigValsh, SVD, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::states::DensityMatrix;
use crate::tol;

pub type C64 = Complex64;

/// Default cap on dense operator dimension; eigensolves are O(d^3).
pub const DEFAULT_MAX_DIM: usize = 4096;

static MAX_DIM: AtomicUsize = AtomicUsize::new(DEFAULT_MAX_DIM);

/// Current cap on dense operator dimension.
pub fn max_dim() -> usize {
    MAX_DIM.load(Ordering::Relaxed)
}

/// Override the dense-dimension cap (fail fast on accidental blowups).
pub fn set_max_dim(dim: usize) {
    MAX_DIM.store(dim, Ordering::Relaxed);
}

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

/// Pin the BLAS worker count. Results must not depend on kernel scheduling,
/// so the CLI pins this to 1 and parallelizes above the kernels.
pub fn set_blas_threads(n: usize) {
    unsafe { openblas_set_num_threads(n.max(1) as std::os::raw::c_int) }
}

/// A dense complex square operator on a finite-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    data: Array2<C64>,
}

impl ComplexOperator {
    /// Wrap a square matrix, rejecting non-square shapes, NaN/Inf entries,
    /// and dimensions beyond the configured cap.
    pub fn from_array(data: Array2<C64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::InvalidDims {
                reason: format!("operator must be square, got {r}x{c}"),
            });
        }
        if r == 0 {
            return Err(Error::InvalidDims {
                reason: "operator dimension must be >= 1".into(),
            });
        }
        if r > max_dim() {
            return Err(Error::DimensionOverflow {
                dim: r,
                max_dim: max_dim(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidDims {
                reason: "operator entries must be finite".into(),
            });
        }
        Ok(Self { data })
    }

    pub(crate) fn from_array_unchecked(data: Array2<C64>) -> Self {
        debug_assert_eq!(data.nrows(), data.ncols());
        Self { data }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> C64) -> Result<Self> {
        Self::from_array(Array2::from_shape_fn((dim, dim), |(i, j)| f(i, j)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: Array2::eye(dim),
        }
    }

    /// Diagonal operator from real entries.
    pub fn diag_real(entries: &[f64]) -> Self {
        let mut data = Array2::zeros((entries.len(), entries.len()));
        for (i, &x) in entries.iter().enumerate() {
            data[(i, i)] = C64::new(x, 0.0);
        }
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim();
        Self {
            data: Array2::from_shape_fn((d, d), |(i, j)| self.data[(j, i)].conj()),
        }
    }

    /// Matrix product; panics on dimension mismatch (programmer error).
    pub fn dot(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "matmul dimension mismatch");
        Self {
            data: self.data.dot(&other.data),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        Self {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        Self {
            data: &self.data - &other.data,
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            data: self.data.mapv(|z| z * factor),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.data.diag().iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max elementwise |A_ij - conj(A_ji)|.
    pub fn hermiticity_deviation(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let dev = (self.data[(i, j)] - self.data[(j, i)].conj()).norm();
                worst = worst.max(dev);
            }
        }
        worst
    }

    pub fn ensure_hermitian(&self, tolerance: f64) -> Result<()> {
        let dev = self.hermiticity_deviation();
        if dev > tolerance {
            Err(Error::NotHermitian { max_deviation: dev })
        } else {
            Ok(())
        }
    }

    /// (A + A^dag) / 2; exact Hermitian symmetrization.
    pub fn symmetrized(&self) -> Self {
        let d = self.dim();
        let mut data = self.data.clone();
        for i in 0..d {
            data[(i, i)] = C64::new(data[(i, i)].re, 0.0);
            for j in (i + 1)..d {
                let avg = (self.data[(i, j)] + self.data[(j, i)].conj()) * 0.5;
                data[(i, j)] = avg;
                data[(j, i)] = avg.conj();
            }
        }
        Self { data }
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> Result<f64> {
        let (_, s, _) = self
            .data
            .svd(false, false)
            .map_err(|e| Error::NumericalFailure(e.to_string()))?;
        Ok(s.iter().copied().fold(0.0, f64::max))
    }
}

/// HA - AH.
pub fn commutator(a: &ComplexOperator, b: &ComplexOperator) -> ComplexOperator {
    a.dot(b).sub(&b.dot(a))
}

// ---------------------------------------------------------------------------
// Tensor algebra
// ---------------------------------------------------------------------------

/// Kronecker product a (x) b.
pub fn tensor(a: &ComplexOperator, b: &ComplexOperator) -> Result<ComplexOperator> {
    let (da, db) = (a.dim(), b.dim());
    let dim = da.checked_mul(db).ok_or(Error::DimensionOverflow {
        dim: usize::MAX,
        max_dim: max_dim(),
    })?;
    if dim > max_dim() {
        return Err(Error::DimensionOverflow {
            dim,
            max_dim: max_dim(),
        });
    }
    let mut data = Array2::zeros((dim, dim));
    for i in 0..da {
        for j in 0..da {
            let aij = a.data[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    data[(i * db + k, j * db + l)] = aij * b.data[(k, l)];
                }
            }
        }
    }
    Ok(ComplexOperator { data })
}

/// Left fold of [`tensor`] over a non-empty slice.
pub fn tensor_many(ops: &[ComplexOperator]) -> Result<ComplexOperator> {
    let (first, rest) = ops.split_first().ok_or(Error::InvalidDims {
        reason: "tensor_many requires at least one factor".into(),
    })?;
    let mut acc = first.clone();
    for op in rest {
        acc = tensor(&acc, op)?;
    }
    Ok(acc)
}

/// Embed `op` acting on factor `position` into the product space with the
/// given factor dimensions (identity elsewhere).
pub fn embed_factor(
    op: &ComplexOperator,
    dims: &[usize],
    position: usize,
) -> Result<ComplexOperator> {
    if position >= dims.len() {
        return Err(Error::InvalidDims {
            reason: format!("factor position {position} out of range for {} factors", dims.len()),
        });
    }
    if op.dim() != dims[position] {
        return Err(Error::DimensionMismatch {
            expected: dims[position],
            got: op.dim(),
        });
    }
    let left: usize = dims[..position].iter().product();
    let right: usize = dims[position + 1..].iter().product();
    let mut acc = tensor(&ComplexOperator::identity(left), op)?;
    acc = tensor(&acc, &ComplexOperator::identity(right))?;
    Ok(acc)
}

fn mixed_radix_offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    // linear index over `dims` -> offset in the full space
    let total: usize = dims.iter().product();
    let mut offsets = vec![0usize; total];
    for (lin, slot) in offsets.iter_mut().enumerate() {
        let mut rem = lin;
        let mut off = 0usize;
        for (f, &d) in dims.iter().enumerate().rev() {
            off += (rem % d) * strides[f];
            rem /= d;
        }
        *slot = off;
    }
    offsets
}

/// Trace out every factor not listed in `keep`.
///
/// `dims` are the factor dimensions (their product must equal the operator
/// dimension); `keep` is a set of factor indices. Kept factors retain their
/// original relative order.
pub fn partial_trace(
    op: &ComplexOperator,
    dims: &[usize],
    keep: &[usize],
) -> Result<ComplexOperator> {
    let total: usize = dims.iter().product();
    if total != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: total,
        });
    }
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() {
        return Err(Error::EmptyKeepSet);
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::InvalidDims {
            reason: format!("keep index {bad} out of range for {} factors", dims.len()),
        });
    }

    // stride of factor f in the row-major composite index
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|f| !keep.contains(f)).collect();
    let kept_dims: Vec<usize> = keep.iter().map(|&f| dims[f]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&f| dims[f]).collect();
    let kept_strides: Vec<usize> = keep.iter().map(|&f| strides[f]).collect();
    let traced_strides: Vec<usize> = traced.iter().map(|&f| strides[f]).collect();

    let kept_offsets = mixed_radix_offsets(&kept_dims, &kept_strides);
    let traced_offsets = if traced.is_empty() {
        vec![0usize]
    } else {
        mixed_radix_offsets(&traced_dims, &traced_strides)
    };

    let d_keep = kept_offsets.len();
    let mut out = Array2::zeros((d_keep, d_keep));
    let data = op.data();
    for (a, &ra) in kept_offsets.iter().enumerate() {
        for (b, &rb) in kept_offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &rt in &traced_offsets {
                acc += data[(ra + rt, rb + rt)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(ComplexOperator { data: out })
}

/// Reorder tensor factors according to `perm`, where the output factor at
/// position `p` is the input factor `perm[p]`.
pub fn permute_factors(
    op: &ComplexOperator,
    dims: &[usize],
    perm: &[usize],
) -> Result<ComplexOperator> {
    let total: usize = dims.iter().product();
    if total != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: total,
        });
    }
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() || perm.iter().any(|&p| p >= dims.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidDims {
            reason: "perm must be a permutation of the factor indices".into(),
        });
    }
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let new_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    // map: new linear index -> old composite index
    let index_map = mixed_radix_offsets(&new_dims, &new_strides);
    let mut out = Array2::zeros((total, total));
    for (i, &oi) in index_map.iter().enumerate() {
        for (j, &oj) in index_map.iter().enumerate() {
            out[(i, j)] = op.data[(oi, oj)];
        }
    }
    Ok(ComplexOperator { data: out })
}

// ---------------------------------------------------------------------------
// Hermitian eigensystems with degeneracy clustering
// ---------------------------------------------------------------------------

/// Eigenvalues (ascending), orthonormal eigenvectors, and a partition of the
/// eigenvector indices into degenerate clusters.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: ComplexOperator,
    clusters: Vec<Vec<usize>>,
    cluster_of: Vec<usize>,
    cluster_tolerance: f64,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Columns are the eigenvectors, ordered with the eigenvalues.
    pub fn eigenvectors(&self) -> &ComplexOperator {
        &self.eigenvectors
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, index: usize) -> usize {
        self.cluster_of[index]
    }

    pub fn cluster_tolerance(&self) -> f64 {
        self.cluster_tolerance
    }

    pub fn spectral_range(&self) -> f64 {
        match (self.eigenvalues.first(), self.eigenvalues.last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }

    /// Smallest gap between adjacent distinct clusters (0 for one cluster).
    pub fn min_cluster_gap(&self) -> f64 {
        let mut min = f64::INFINITY;
        for w in self.clusters.windows(2) {
            let hi_prev = self.eigenvalues[*w[0].last().unwrap()];
            let lo_next = self.eigenvalues[w[1][0]];
            min = min.min(lo_next - hi_prev);
        }
        if min.is_finite() {
            min
        } else {
            0.0
        }
    }

    /// Projector onto the degenerate subspace of cluster `c`.
    pub fn projector(&self, c: usize) -> ComplexOperator {
        let d = self.dim();
        let v = self.eigenvectors.data();
        let mut data = Array2::zeros((d, d));
        for &m in &self.clusters[c] {
            for i in 0..d {
                for j in 0..d {
                    data[(i, j)] += v[(i, m)] * v[(j, m)].conj();
                }
            }
        }
        ComplexOperator { data }
    }

    /// V^dag M V.
    pub fn to_eigenbasis(&self, op: &ComplexOperator) -> ComplexOperator {
        let v = &self.eigenvectors;
        v.adjoint().dot(op).dot(v)
    }

    /// V M V^dag.
    pub fn from_eigenbasis(&self, op: &ComplexOperator) -> ComplexOperator {
        let v = &self.eigenvectors;
        v.dot(op).dot(&v.adjoint())
    }

    /// V diag(E) V^dag.
    pub fn reconstruct(&self) -> ComplexOperator {
        let d = self.dim();
        let v = self.eigenvectors.data();
        let mut scaled = Array2::zeros((d, d));
        for j in 0..d {
            let e = C64::new(self.eigenvalues[j], 0.0);
            for i in 0..d {
                scaled[(i, j)] = v[(i, j)] * e;
            }
        }
        ComplexOperator {
            data: scaled.dot(&self.eigenvectors.adjoint().data),
        }
    }

    /// Tr(Pi_n rho) for every cluster n.
    pub fn cluster_populations(&self, rho: &ComplexOperator) -> Vec<f64> {
        let tilde = self.to_eigenbasis(rho);
        self.clusters
            .iter()
            .map(|members| members.iter().map(|&m| tilde.data[(m, m)].re).sum())
            .collect()
    }
}

/// Hermitian eigensolve with the eigenvector matrix corrected for the
/// backend's transposed (column-major) storage, which shows up as a complex
/// conjugation on Hermitian input. Columns of the returned operator are the
/// eigenvectors, ordered with the ascending eigenvalues.
fn eigh_raw(op: &ComplexOperator) -> Result<(Vec<f64>, ComplexOperator)> {
    let (vals, vecs) = op
        .symmetrized()
        .data
        .eigh(UPLO::Lower)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let fixed = vecs.mapv(|z| z.conj());
    Ok((vals.to_vec(), ComplexOperator { data: fixed }))
}

fn cluster_ascending(eigenvalues: &[f64], tolerance: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &e) in eigenvalues.iter().enumerate() {
        match clusters.last_mut() {
            Some(current) if e - eigenvalues[*current.last().unwrap()] <= tolerance => {
                current.push(i);
            }
            _ => clusters.push(vec![i]),
        }
    }
    clusters
}

/// Hermitian eigendecomposition with single-linkage degeneracy clustering at
/// the given absolute tolerance. Eigenvalues come out ascending.
pub fn hermitian_eig(
    op: &ComplexOperator,
    cluster_tolerance: f64,
) -> Result<SpectralDecomposition> {
    if cluster_tolerance < 0.0 || !cluster_tolerance.is_finite() {
        return Err(Error::InvalidDims {
            reason: format!("cluster_tolerance must be finite and >= 0, got {cluster_tolerance}"),
        });
    }
    op.ensure_hermitian(tol::HERMITICITY)?;
    let (eigenvalues, eigenvectors) = eigh_raw(op)?;
    let clusters = cluster_ascending(&eigenvalues, cluster_tolerance);
    let mut cluster_of = vec![0usize; eigenvalues.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            cluster_of[m] = c;
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        clusters,
        cluster_of,
        cluster_tolerance,
    })
}

/// [`hermitian_eig`] with the default tolerance relative to spectral range.
pub fn hermitian_eig_auto(op: &ComplexOperator) -> Result<SpectralDecomposition> {
    op.ensure_hermitian(tol::HERMITICITY)?;
    let vals = op
        .symmetrized()
        .data
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let range = vals[vals.len() - 1] - vals[0];
    hermitian_eig(op, tol::CLUSTER_TOL_REL * range)
}

/// Eigenvalues only (ascending).
pub fn hermitian_eigenvalues(op: &ComplexOperator) -> Result<Vec<f64>> {
    op.ensure_hermitian(tol::HERMITICITY)?;
    let vals = op
        .symmetrized()
        .data
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    Ok(vals.to_vec())
}

/// Principal square root of a PSD Hermitian operator. Eigenvalues below
/// `-PSD_FLOOR` are rejected; values in `[-PSD_FLOOR, 0]` are clipped to 0.
pub fn matrix_sqrt_psd(op: &ComplexOperator) -> Result<ComplexOperator> {
    let (vals, vecs) = eigh_raw(op)?;
    let d = op.dim();
    let mut scaled = Array2::zeros((d, d));
    for j in 0..d {
        let lambda = vals[j];
        if lambda < -tol::PSD_FLOOR {
            return Err(Error::NotPsd {
                min_eigenvalue: lambda,
            });
        }
        let root = C64::new(lambda.max(0.0).sqrt(), 0.0);
        for i in 0..d {
            scaled[(i, j)] = vecs.data[(i, j)] * root;
        }
    }
    Ok(ComplexOperator {
        data: scaled.dot(&vecs.adjoint().data),
    })
}

// ---------------------------------------------------------------------------
// State distance measures
// ---------------------------------------------------------------------------

/// Uhlmann fidelity F(rho, sigma) = Tr(sqrt(sqrt(rho) sigma sqrt(rho)))^2,
/// evaluated as the squared trace norm of sqrt(rho) sqrt(sigma); the singular
/// values avoid taking square roots of near-zero eigenvalues.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let a = matrix_sqrt_psd(rho.op())?;
    let b = matrix_sqrt_psd(sigma.op())?;
    let product = a.dot(&b);
    let (_, s, _) = product
        .data
        .svd(false, false)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let root_f: f64 = s.iter().sum();
    Ok((root_f * root_f).clamp(0.0, 1.0))
}

/// Trace distance D = (1/2) sum |eigenvalues(rho - sigma)|.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    trace_distance_hermitian(rho.op(), sigma.op())
}

/// Trace distance between Hermitian operators (not necessarily states).
pub fn trace_distance_hermitian(a: &ComplexOperator, b: &ComplexOperator) -> Result<f64> {
    let vals = hermitian_eigenvalues(&a.sub(b))?;
    Ok(0.5 * vals.iter().map(|x| x.abs()).sum::<f64>())
}

/// Von Neumann entropy in nats; weights at or below the entropy floor are
/// treated as exactly zero.
pub fn von_neumann_entropy(op: &ComplexOperator) -> Result<f64> {
    let vals = hermitian_eigenvalues(op)?;
    Ok(vals
        .iter()
        .filter(|&&l| l > tol::ENTROPY_EIG_FLOOR)
        .map(|&l| -l * l.ln())
        .sum())
}

/// Mutual information S(A) + S(B) - S(AB) of a bipartite state with parts of
/// dimension `dims = [d_a, d_b]`; clipped at 0 from below.
pub fn mutual_information(rho: &DensityMatrix, dims: [usize; 2]) -> Result<f64> {
    let [da, db] = dims;
    if da * db != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: da * db,
        });
    }
    let rho_a = partial_trace(rho.op(), &dims, &[0])?;
    let rho_b = partial_trace(rho.op(), &dims, &[1])?;
    let s_a = von_neumann_entropy(&rho_a)?;
    let s_b = von_neumann_entropy(&rho_b)?;
    let s_ab = von_neumann_entropy(rho.op())?;
    Ok((s_a + s_b - s_ab).max(0.0))
}

// ---------------------------------------------------------------------------
// Mixed-unitary form of the pinching map (oracle for the projector sum)
// ---------------------------------------------------------------------------

/// Pinching evaluated as the mixed-unitary channel
/// (1/d') sum_y U_y rho U_y^dag with U_y = sum_n exp(-i 2 pi n y / d') Pi_n
/// over the d' degenerate clusters. Exists as an independent cross-check of
/// the projector-sum pinching; prefer `equilibration::pinch` for real work.
pub fn pinch_as_mixed_unitary(
    rho: &DensityMatrix,
    decomp: &SpectralDecomposition,
) -> Result<DensityMatrix> {
    if rho.dim() != decomp.dim() {
        return Err(Error::DimensionMismatch {
            expected: decomp.dim(),
            got: rho.dim(),
        });
    }
    let d = rho.dim();
    let dp = decomp.n_clusters();
    let mut acc: Array2<C64> = Array2::zeros((d, d));
    for y in 1..=dp {
        // diagonal phases in the eigenbasis, constant within each cluster
        let phases: Vec<C64> = (0..d)
            .map(|m| {
                let n = decomp.cluster_of(m) + 1;
                let angle = -2.0 * std::f64::consts::PI * (n as f64) * (y as f64) / (dp as f64);
                C64::new(0.0, angle).exp()
            })
            .collect();
        let v = decomp.eigenvectors().data();
        let mut u = Array2::zeros((d, d));
        for j in 0..d {
            for i in 0..d {
                u[(i, j)] = v[(i, j)] * phases[j];
            }
        }
        let u = ComplexOperator { data: u.dot(&decomp.eigenvectors().adjoint().data) };
        acc = acc + u.dot(rho.op()).dot(&u.adjoint()).data;
    }
    let averaged = ComplexOperator {
        data: acc.mapv(|z| z / dp as f64),
    }
    .symmetrized();
    Ok(DensityMatrix::from_trusted(averaged, rho.dims().to_vec()))
}

// ---------------------------------------------------------------------------
// Small helpers shared across modules
// ---------------------------------------------------------------------------

/// Column vector |psi><psi| outer product.
pub fn outer_product(ket: &Array1<C64>) -> ComplexOperator {
    let d = ket.len();
    let mut data = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            data[(i, j)] = ket[i] * ket[j].conj();
        }
    }
    ComplexOperator { data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{random_density, DensityMatrix};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn random_hermitian(dim: usize, seed: u64) -> ComplexOperator {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        crate::hamiltonians::random_hermitian_with(dim, &mut rng)
    }

    #[test]
    fn eig_distinct_diagonal_forms_three_clusters() {
        let op = ComplexOperator::diag_real(&[1.0, 2.0, 3.0]);
        let decomp = hermitian_eig(&op, 1e-9).unwrap();
        assert_eq!(decomp.n_clusters(), 3);
        assert_eq!(decomp.eigenvalues(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn eig_identity_is_one_cluster() {
        let decomp = hermitian_eig(&ComplexOperator::identity(4), 1e-9).unwrap();
        assert_eq!(decomp.n_clusters(), 1);
        assert_eq!(decomp.clusters()[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let op = random_hermitian(8, 42);
        let decomp = hermitian_eig_auto(&op).unwrap();
        let err = decomp.reconstruct().sub(&op).frobenius_norm() / op.frobenius_norm();
        assert!(err <= 1e-9, "reconstruction error {err:e}");
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut data = Array2::zeros((2, 2));
        data[(0, 1)] = C64::new(1.0, 0.0);
        let op = ComplexOperator::from_array(data).unwrap();
        assert!(matches!(
            hermitian_eig(&op, 1e-9),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn tensor_of_identities() {
        let t = tensor(&ComplexOperator::identity(2), &ComplexOperator::identity(3)).unwrap();
        assert_eq!(t, ComplexOperator::identity(6));
    }

    #[test]
    fn tensor_of_diagonals() {
        let t = tensor(
            &ComplexOperator::diag_real(&[1.0, 2.0]),
            &ComplexOperator::diag_real(&[3.0, 4.0]),
        )
        .unwrap();
        assert_eq!(t, ComplexOperator::diag_real(&[3.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn tensor_mixed_product_property() {
        let ops: Vec<ComplexOperator> = (0..4).map(|s| random_hermitian(2, 100 + s)).collect();
        let lhs = tensor(&ops[0], &ops[1]).unwrap().dot(&tensor(&ops[2], &ops[3]).unwrap());
        let rhs = tensor(&ops[0].dot(&ops[2]), &ops[1].dot(&ops[3])).unwrap();
        assert!(lhs.sub(&rhs).max_abs_entry() <= 1e-12);
    }

    #[test]
    fn tensor_respects_max_dim() {
        let err = tensor(
            &ComplexOperator::identity(100),
            &ComplexOperator::identity(100),
        );
        assert!(matches!(err, Err(Error::DimensionOverflow { .. })));
    }

    #[test]
    fn partial_trace_of_product_state_recovers_factor() {
        let rho_s = random_density(2, 2, 1).unwrap();
        let rho_e = random_density(3, 3, 2).unwrap();
        let joint = tensor(rho_s.op(), rho_e.op()).unwrap();
        let back = partial_trace(&joint, &[2, 3], &[0]).unwrap();
        assert!(back.sub(rho_s.op()).max_abs_entry() <= 1e-12);
        let back_e = partial_trace(&joint, &[2, 3], &[1]).unwrap();
        assert!(back_e.sub(rho_e.op()).max_abs_entry() <= 1e-12);
    }

    #[test]
    fn partial_trace_of_maximally_mixed() {
        let op = ComplexOperator::identity(4).scale_real(0.25);
        let reduced = partial_trace(&op, &[2, 2], &[0]).unwrap();
        assert!(reduced.sub(&ComplexOperator::identity(2).scale_real(0.5)).max_abs_entry() <= 1e-14);
    }

    #[test]
    fn partial_trace_duality_with_embedded_observable() {
        // Tr[Tr_B(rho) A] = Tr[rho (A (x) 1)]
        let rho = random_density(4, 4, 7).unwrap();
        let a = random_hermitian(2, 8);
        let reduced = partial_trace(rho.op(), &[2, 2], &[0]).unwrap();
        let lhs = reduced.dot(&a).trace();
        let rhs = rho.op().dot(&tensor(&a, &ComplexOperator::identity(2)).unwrap()).trace();
        assert!((lhs - rhs).norm() <= 1e-11);
    }

    #[test]
    fn partial_trace_preserves_trace() {
        let rho = random_density(8, 8, 3).unwrap();
        let reduced = partial_trace(rho.op(), &[2, 2, 2], &[1]).unwrap();
        assert_abs_diff_eq!(reduced.trace().re, 1.0, epsilon = 1e-12);
        assert!(reduced.trace().im.abs() <= 1e-12);
    }

    #[test]
    fn permute_factors_swaps_tensor_order() {
        let a = random_hermitian(2, 11);
        let b = random_hermitian(3, 12);
        let ab = tensor(&a, &b).unwrap();
        let ba = tensor(&b, &a).unwrap();
        let swapped = permute_factors(&ab, &[2, 3], &[1, 0]).unwrap();
        assert!(swapped.sub(&ba).max_abs_entry() <= 1e-14);
    }

    #[test]
    fn fidelity_of_identical_states_is_one() {
        let rho = random_density(4, 4, 5).unwrap();
        let f = fidelity(&rho, &rho).unwrap();
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fidelity_of_orthogonal_pure_states_is_zero() {
        let rho = DensityMatrix::basis_state(2, 0).unwrap();
        let sigma = DensityMatrix::basis_state(2, 1).unwrap();
        assert!(fidelity(&rho, &sigma).unwrap() <= 1e-12);
    }

    #[test]
    fn fidelity_dominates_state_overlap() {
        // F(rho, sigma) >= Tr(rho sigma)
        for seed in 0..200u64 {
            let rho = random_density(2, 2, 1000 + seed).unwrap();
            let sigma = random_density(2, 2, 2000 + seed).unwrap();
            let f = fidelity(&rho, &sigma).unwrap();
            let overlap = rho.op().dot(sigma.op()).trace().re;
            assert!(
                f >= overlap - 1e-12,
                "seed {seed}: F = {f} < Tr(rho sigma) = {overlap}"
            );
        }
    }

    #[test]
    fn fidelity_is_symmetric() {
        let rho = random_density(4, 2, 21).unwrap();
        let sigma = random_density(4, 4, 22).unwrap();
        let f1 = fidelity(&rho, &sigma).unwrap();
        let f2 = fidelity(&sigma, &rho).unwrap();
        assert_abs_diff_eq!(f1, f2, epsilon = 1e-9);
    }

    #[test]
    fn trace_distance_axioms() {
        let rho = random_density(3, 3, 31).unwrap();
        assert!(trace_distance(&rho, &rho).unwrap() <= 1e-14);
        let zero = DensityMatrix::basis_state(2, 0).unwrap();
        let one = DensityMatrix::basis_state(2, 1).unwrap();
        assert_abs_diff_eq!(trace_distance(&zero, &one).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_distance_triangle_inequality() {
        for seed in 0..100u64 {
            let a = random_density(3, 3, 3000 + seed).unwrap();
            let b = random_density(3, 3, 4000 + seed).unwrap();
            let c = random_density(3, 3, 5000 + seed).unwrap();
            let ab = trace_distance(&a, &b).unwrap();
            let bc = trace_distance(&b, &c).unwrap();
            let ac = trace_distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn mutual_information_of_product_state_vanishes() {
        let rho_a = random_density(2, 2, 41).unwrap();
        let rho_b = random_density(3, 3, 42).unwrap();
        let joint = DensityMatrix::new(
            tensor(rho_a.op(), rho_b.op()).unwrap(),
            vec![2, 3],
        )
        .unwrap();
        assert!(mutual_information(&joint, [2, 3]).unwrap() <= 1e-10);
    }

    #[test]
    fn mutual_information_of_bell_state() {
        let inv = 1.0 / 2f64.sqrt();
        let mut ket = Array1::zeros(4);
        ket[0] = C64::new(inv, 0.0);
        ket[3] = C64::new(inv, 0.0);
        let rho = DensityMatrix::pure(&ket, vec![2, 2]).unwrap();
        let mi = mutual_information(&rho, [2, 2]).unwrap();
        assert_abs_diff_eq!(mi, 2.0 * 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn mutual_information_of_cq_state_matches_entropy_oracle() {
        // rho = sum_i p_i |i><i| (x) rho_i with distinct conditionals:
        // I = S(sum p_i rho_i) - sum p_i S(rho_i)
        let p = [0.3, 0.7];
        let parts = [random_density(2, 2, 51).unwrap(), random_density(2, 1, 52).unwrap()];
        let mut data = Array2::zeros((4, 4));
        for (i, (pi, rho_i)) in p.iter().zip(parts.iter()).enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    data[(i * 2 + a, i * 2 + b)] = C64::new(*pi, 0.0) * rho_i.op().get(a, b);
                }
            }
        }
        let rho = DensityMatrix::new(ComplexOperator::from_array(data).unwrap(), vec![2, 2]).unwrap();
        let mi = mutual_information(&rho, [2, 2]).unwrap();

        let avg = parts[0].op().scale_real(p[0]).add(&parts[1].op().scale_real(p[1]));
        let holevo = von_neumann_entropy(&avg).unwrap()
            - p[0] * von_neumann_entropy(parts[0].op()).unwrap()
            - p[1] * von_neumann_entropy(parts[1].op()).unwrap();
        assert_abs_diff_eq!(mi, holevo, epsilon = 1e-10);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let op = ComplexOperator::diag_real(&[1.0, -3.0, 2.0]);
        assert_abs_diff_eq!(op.operator_norm().unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn mixed_unitary_on_fully_degenerate_spectrum_is_identity_map() {
        let rho = random_density(4, 4, 61).unwrap();
        let decomp = hermitian_eig(&ComplexOperator::identity(4), 1e-9).unwrap();
        let out = pinch_as_mixed_unitary(&rho, &decomp).unwrap();
        assert!(out.op().sub(rho.op()).max_abs_entry() <= 1e-12);
    }

    #[test]
    fn mixed_unitary_keeps_diagonal_states_fixed() {
        let rho = DensityMatrix::new(
            ComplexOperator::diag_real(&[0.5, 0.3, 0.2]),
            vec![3],
        )
        .unwrap();
        let h = ComplexOperator::diag_real(&[0.0, 1.0, 2.5]);
        let decomp = hermitian_eig(&h, 1e-9).unwrap();
        let out = pinch_as_mixed_unitary(&rho, &decomp).unwrap();
        assert!(out.op().sub(rho.op()).max_abs_entry() <= 1e-12);
    }
}
