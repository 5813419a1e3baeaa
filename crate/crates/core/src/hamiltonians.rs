//! Builders and analyzers for the structured Hamiltonian families: explicit
//! dense operators, conditional (pointer-controlled) couplings, star-shaped
//! observer couplings, and the product form used by the standard measurement
//! model. Includes spectrum diagnostics and seeded random ensembles.

use rand::Rng;

use crate::error::{Error, Result};
use crate::qops::{self, ComplexOperator};
use crate::states::{complex_gaussian, seeded_rng, HilbertFactorization, PointerBasis};
use crate::tol;

/// H = sum_i |b_i><b_i| (x) H_E^(i): each pointer branch drives the whole
/// environment with its own Hermitian generator.
#[derive(Debug, Clone)]
pub struct ConditionalHamiltonianSpec {
    basis: PointerBasis,
    branch_ops: Vec<ComplexOperator>,
}

impl ConditionalHamiltonianSpec {
    pub fn new(basis: PointerBasis, branch_ops: Vec<ComplexOperator>) -> Result<Self> {
        if branch_ops.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: branch_ops.len(),
            });
        }
        let env_dim = branch_ops[0].dim();
        for op in &branch_ops {
            if op.dim() != env_dim {
                return Err(Error::DimensionMismatch {
                    expected: env_dim,
                    got: op.dim(),
                });
            }
            op.ensure_hermitian(tol::HERMITICITY)?;
        }
        Ok(Self { basis, branch_ops })
    }

    pub fn basis(&self) -> &PointerBasis {
        &self.basis
    }

    pub fn branch_ops(&self) -> &[ComplexOperator] {
        &self.branch_ops
    }

    pub fn system_dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn env_dim(&self) -> usize {
        self.branch_ops[0].dim()
    }

    /// Dense operator on the full system (x) environment space.
    pub fn assemble(&self) -> Result<ComplexOperator> {
        let mut acc = ComplexOperator::zeros(self.system_dim() * self.env_dim());
        for (i, branch) in self.branch_ops.iter().enumerate() {
            let term = qops::tensor(&self.basis.projector(i), branch)?;
            acc = acc.add(&term);
        }
        Ok(acc.symmetrized())
    }
}

/// H = sum_i |b_i><b_i| (x) sum_k c_k H_k^(i): each branch acts on every
/// observer factor independently, with per-observer coupling strengths.
#[derive(Debug, Clone)]
pub struct StarHamiltonianSpec {
    basis: PointerBasis,
    couplings: Vec<f64>,
    /// Indexed as local_ops[branch i][observer k].
    local_ops: Vec<Vec<ComplexOperator>>,
}

impl StarHamiltonianSpec {
    pub fn new(
        basis: PointerBasis,
        couplings: Vec<f64>,
        local_ops: Vec<Vec<ComplexOperator>>,
    ) -> Result<Self> {
        if local_ops.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: local_ops.len(),
            });
        }
        if let Some(&bad) = couplings.iter().find(|c| !c.is_finite() || **c == 0.0) {
            return Err(Error::InvalidDims {
                reason: format!("couplings must be finite and nonzero, got {bad}"),
            });
        }
        let n = couplings.len();
        for row in &local_ops {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (k, op) in row.iter().enumerate() {
                if op.dim() != local_ops[0][k].dim() {
                    return Err(Error::DimensionMismatch {
                        expected: local_ops[0][k].dim(),
                        got: op.dim(),
                    });
                }
                op.ensure_hermitian(tol::HERMITICITY)?;
            }
        }
        Ok(Self {
            basis,
            couplings,
            local_ops,
        })
    }

    pub fn basis(&self) -> &PointerBasis {
        &self.basis
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn local_ops(&self) -> &[Vec<ComplexOperator>] {
        &self.local_ops
    }

    pub fn system_dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_observers(&self) -> usize {
        self.couplings.len()
    }

    pub fn env_dims(&self) -> Vec<usize> {
        self.local_ops[0].iter().map(|op| op.dim()).collect()
    }

    pub fn env_dim(&self) -> usize {
        self.env_dims().iter().product()
    }

    /// Local generator of observer k under branch i, including its coupling.
    pub fn scaled_local_op(&self, branch: usize, observer: usize) -> ComplexOperator {
        self.local_ops[branch][observer].scale_real(self.couplings[observer])
    }

    /// Collapse the per-observer structure into plain branch operators
    /// H_E^(i) = sum_k c_k (1 (x) ... (x) H_k^(i) (x) ... (x) 1).
    pub fn to_conditional(&self) -> Result<ConditionalHamiltonianSpec> {
        let env_dims = self.env_dims();
        let mut branch_ops = Vec::with_capacity(self.system_dim());
        for row in &self.local_ops {
            let mut acc = ComplexOperator::zeros(self.env_dim());
            for (k, op) in row.iter().enumerate() {
                let embedded = qops::embed_factor(op, &env_dims, k)?;
                acc = acc.add(&embedded.scale_real(self.couplings[k]));
            }
            branch_ops.push(acc);
        }
        ConditionalHamiltonianSpec::new(self.basis.clone(), branch_ops)
    }

    pub fn assemble(&self) -> Result<ComplexOperator> {
        self.to_conditional()?.assemble()
    }
}

/// H = X_S (x) Y with X_S = sum_i x_i |i><i| diagonal in the computational
/// pointer basis.
#[derive(Debug, Clone)]
pub struct VonNeumannSpec {
    pointer_values: Vec<f64>,
    env_op: ComplexOperator,
}

impl VonNeumannSpec {
    pub fn new(pointer_values: Vec<f64>, env_op: ComplexOperator) -> Result<Self> {
        if pointer_values.len() < 2 {
            return Err(Error::InvalidDims {
                reason: "at least two pointer values are required".into(),
            });
        }
        if let Some(&bad) = pointer_values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidDims {
                reason: format!("pointer values must be finite, got {bad}"),
            });
        }
        env_op.ensure_hermitian(tol::HERMITICITY)?;
        Ok(Self {
            pointer_values,
            env_op,
        })
    }

    pub fn pointer_values(&self) -> &[f64] {
        &self.pointer_values
    }

    pub fn env_op(&self) -> &ComplexOperator {
        &self.env_op
    }

    pub fn system_dim(&self) -> usize {
        self.pointer_values.len()
    }

    pub fn env_dim(&self) -> usize {
        self.env_op.dim()
    }

    pub fn system_op(&self) -> ComplexOperator {
        ComplexOperator::diag_real(&self.pointer_values)
    }

    pub fn assemble(&self) -> Result<ComplexOperator> {
        qops::tensor(&self.system_op(), &self.env_op)
    }
}

/// The Hamiltonian families the library manipulates.
#[derive(Debug, Clone)]
pub enum HamiltonianSpec {
    Explicit(ComplexOperator),
    Conditional(ConditionalHamiltonianSpec),
    Star(StarHamiltonianSpec),
    VonNeumann(VonNeumannSpec),
}

/// Dense Hermitian operator for any spec family.
pub fn assemble(spec: &HamiltonianSpec) -> Result<ComplexOperator> {
    match spec {
        HamiltonianSpec::Explicit(op) => {
            op.ensure_hermitian(tol::HERMITICITY)?;
            Ok(op.clone())
        }
        HamiltonianSpec::Conditional(spec) => spec.assemble(),
        HamiltonianSpec::Star(spec) => spec.assemble(),
        HamiltonianSpec::VonNeumann(spec) => spec.assemble(),
    }
}

/// Location of a spectrum defect.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum SpectrumWitness {
    /// Eigenvalue indices closer than the gap tolerance.
    DegeneratePair { i: usize, j: usize },
    /// Two distinct index pairs whose gaps match within the tolerance.
    EqualGaps {
        i1: usize,
        j1: usize,
        i2: usize,
        j2: usize,
    },
}

/// Degeneracy and equal-gap diagnostics for a Hermitian spectrum.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectrumDiagnostics {
    pub is_nondegenerate: bool,
    pub has_equal_gaps: bool,
    /// Smallest gap between distinct levels (0 when fully degenerate).
    pub min_gap: f64,
    pub gap_tolerance: f64,
    pub witness: Option<SpectrumWitness>,
}

pub(crate) fn diagnose_eigenvalues(sorted: &[f64], gap_tolerance: f64) -> SpectrumDiagnostics {
    let d = sorted.len();
    let mut degenerate_pair = None;
    let mut min_gap = f64::INFINITY;
    for i in 1..d {
        let gap = sorted[i] - sorted[i - 1];
        if gap <= gap_tolerance {
            if degenerate_pair.is_none() {
                degenerate_pair = Some((i - 1, i));
            }
        } else {
            min_gap = min_gap.min(gap);
        }
    }
    if !min_gap.is_finite() {
        min_gap = 0.0;
    }

    // Two gaps match within tolerance iff two adjacent entries of the sorted
    // gap list do; equivalent to the exhaustive pair scan but O(d^2 log d).
    let mut gaps: Vec<(f64, usize, usize)> = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            gaps.push((sorted[j] - sorted[i], i, j));
        }
    }
    gaps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut equal_gaps_witness = None;
    for w in gaps.windows(2) {
        if (w[1].0 - w[0].0).abs() <= gap_tolerance {
            equal_gaps_witness = Some(SpectrumWitness::EqualGaps {
                i1: w[0].1,
                j1: w[0].2,
                i2: w[1].1,
                j2: w[1].2,
            });
            break;
        }
    }

    let is_nondegenerate = degenerate_pair.is_none();
    let has_equal_gaps = equal_gaps_witness.is_some();
    let witness = match (degenerate_pair, equal_gaps_witness) {
        (Some((i, j)), _) => Some(SpectrumWitness::DegeneratePair { i, j }),
        (None, Some(w)) => Some(w),
        (None, None) => None,
    };
    SpectrumDiagnostics {
        is_nondegenerate,
        has_equal_gaps,
        min_gap,
        gap_tolerance,
        witness,
    }
}

/// Check a Hermitian operator for degeneracy and matching energy gaps.
pub fn diagnose_spectrum(h: &ComplexOperator, gap_tolerance: f64) -> Result<SpectrumDiagnostics> {
    let vals = qops::hermitian_eigenvalues(h)?;
    Ok(diagnose_eigenvalues(&vals, gap_tolerance))
}

/// [`diagnose_spectrum`] at the default tolerance relative to spectral range.
pub fn diagnose_spectrum_auto(h: &ComplexOperator) -> Result<SpectrumDiagnostics> {
    let vals = qops::hermitian_eigenvalues(h)?;
    let range = vals[vals.len() - 1] - vals[0];
    Ok(diagnose_eigenvalues(&vals, tol::GAP_TOL_REL * range))
}

/// Gaussian-Hermitian (GUE-convention) matrix (A + A^dag)/2 with A drawn
/// entrywise from the standard complex normal.
pub fn random_hermitian_with(dim: usize, rng: &mut impl Rng) -> ComplexOperator {
    let a = ndarray::Array2::from_shape_fn((dim, dim), |_| complex_gaussian(rng));
    ComplexOperator::from_array_unchecked(a).symmetrized()
}

/// Seeded, deterministic version of [`random_hermitian_with`].
pub fn random_hermitian(dim: usize, seed: u64) -> ComplexOperator {
    let mut rng = seeded_rng(seed);
    random_hermitian_with(dim, &mut rng)
}

const ENSEMBLE_MAX_REDRAWS: usize = 16;

/// All eigenvalues of the assembled star Hamiltonian, computed branchwise
/// from the factor spectra: the spectrum of branch i is the Kronecker sum
/// of the coupled local spectra.
pub(crate) fn star_composite_eigenvalues(spec: &StarHamiltonianSpec) -> Result<Vec<Vec<f64>>> {
    let mut per_branch = Vec::with_capacity(spec.system_dim());
    for i in 0..spec.system_dim() {
        let mut sums = vec![0.0f64];
        for k in 0..spec.n_observers() {
            let vals = qops::hermitian_eigenvalues(&spec.scaled_local_op(i, k))?;
            let mut next = Vec::with_capacity(sums.len() * vals.len());
            for &s in &sums {
                for &v in &vals {
                    next.push(s + v);
                }
            }
            sums = next;
        }
        per_branch.push(sums);
    }
    Ok(per_branch)
}

/// Draw a star Hamiltonian with GUE local terms and couplings uniform in
/// [0.5, 1.5], redrawing (up to a bounded number of attempts) whenever the
/// assembled spectrum is degenerate.
pub fn random_branch_ensemble(
    fact: &HilbertFactorization,
    system_dim: usize,
    seed: u64,
) -> Result<StarHamiltonianSpec> {
    if system_dim != fact.system_dim() {
        return Err(Error::DimensionMismatch {
            expected: fact.system_dim(),
            got: system_dim,
        });
    }
    let mut rng = seeded_rng(seed);
    for _attempt in 0..=ENSEMBLE_MAX_REDRAWS {
        let couplings: Vec<f64> = (0..fact.n_observers())
            .map(|_| rng.gen_range(0.5..1.5))
            .collect();
        let local_ops: Vec<Vec<ComplexOperator>> = (0..system_dim)
            .map(|_| {
                fact.env_dims()
                    .iter()
                    .map(|&dk| random_hermitian_with(dk, &mut rng))
                    .collect()
            })
            .collect();
        let spec = StarHamiltonianSpec::new(
            PointerBasis::computational(system_dim),
            couplings,
            local_ops,
        )?;
        let mut all: Vec<f64> = star_composite_eigenvalues(&spec)?
            .into_iter()
            .flatten()
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let range = all[all.len() - 1] - all[0];
        let diag = diagnose_eigenvalues(&all, tol::GAP_TOL_REL * range);
        if diag.is_nondegenerate {
            return Ok(spec);
        }
    }
    Err(Error::DegenerateAfterRetries {
        attempts: ENSEMBLE_MAX_REDRAWS,
    })
}
