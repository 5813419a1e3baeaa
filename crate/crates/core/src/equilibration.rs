//! Infinite- and finite-time averaging, effective dimension, and the
//! equilibration-on-average bound checks.
//!
//! The infinite-time average of e^{-iHt} rho e^{iHt} equals the pinching of
//! rho by the spectral projectors of H; that identity is what everything in
//! this module leans on. Structured (conditional and star) Hamiltonians get
//! branchwise fast paths that replace one full-space eigensolve by many
//! small ones, cross-checked in tests against the dense route.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonians::{
    diagnose_spectrum_auto, star_composite_eigenvalues, ConditionalHamiltonianSpec,
    StarHamiltonianSpec, VonNeumannSpec,
};
use crate::qops::{self, ComplexOperator, SpectralDecomposition, C64};
use crate::states::{pointer_probabilities, product_state, DensityMatrix, PointerBasis};
use crate::tol;

/// Outcome of an equilibration bound check; `lhs <= rhs` is the bound.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

/// Effective dimension plus the sampled bound comparisons for one instance.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EquilibrationReport {
    pub d_eff: f64,
    pub observable_bound: Option<BoundCheck>,
    pub subsystem_bound: Option<BoundCheck>,
    pub n_time_samples: usize,
    pub t_window: f64,
}

// ---------------------------------------------------------------------------
// Pinching
// ---------------------------------------------------------------------------

/// Project out all coherences between distinct degenerate clusters of the
/// given decomposition: sum_n Pi_n rho Pi_n.
pub fn pinch_with(rho: &DensityMatrix, decomp: &SpectralDecomposition) -> Result<DensityMatrix> {
    if rho.dim() != decomp.dim() {
        return Err(Error::DimensionMismatch {
            expected: decomp.dim(),
            got: rho.dim(),
        });
    }
    let mut tilde = decomp.to_eigenbasis(rho.op()).into_data();
    let d = decomp.dim();
    for m in 0..d {
        for n in 0..d {
            if decomp.cluster_of(m) != decomp.cluster_of(n) {
                tilde[(m, n)] = C64::new(0.0, 0.0);
            }
        }
    }
    let out = decomp
        .from_eigenbasis(&ComplexOperator::from_array_unchecked(tilde))
        .symmetrized();
    Ok(DensityMatrix::from_trusted(out, rho.dims().to_vec()))
}

/// Pinching map with respect to a Hamiltonian: decompose H with the given
/// degeneracy-clustering tolerance, then apply [`pinch_with`].
pub fn pinch(
    rho: &DensityMatrix,
    h: &ComplexOperator,
    cluster_tolerance: f64,
) -> Result<DensityMatrix> {
    let decomp = qops::hermitian_eig(h, cluster_tolerance)?;
    pinch_with(rho, &decomp)
}

/// [`pinch`] with the default relative clustering tolerance.
pub fn pinch_auto(rho: &DensityMatrix, h: &ComplexOperator) -> Result<DensityMatrix> {
    let decomp = qops::hermitian_eig_auto(h)?;
    pinch_with(rho, &decomp)
}

// ---------------------------------------------------------------------------
// Finite-time averages
// ---------------------------------------------------------------------------

/// e^{-iHt} rho e^{iHt} evaluated through a precomputed eigensystem.
pub fn evolve_with(
    decomp: &SpectralDecomposition,
    rho: &DensityMatrix,
    t: f64,
) -> Result<DensityMatrix> {
    if rho.dim() != decomp.dim() {
        return Err(Error::DimensionMismatch {
            expected: decomp.dim(),
            got: rho.dim(),
        });
    }
    let tilde = decomp.to_eigenbasis(rho.op());
    let evolved = evolve_in_eigenbasis(decomp, &tilde, t);
    let out = decomp.from_eigenbasis(&evolved).symmetrized();
    Ok(DensityMatrix::from_trusted(out, rho.dims().to_vec()))
}

fn evolve_in_eigenbasis(
    decomp: &SpectralDecomposition,
    tilde: &ComplexOperator,
    t: f64,
) -> ComplexOperator {
    let d = decomp.dim();
    let energies = decomp.eigenvalues();
    let phases: Vec<C64> = energies
        .iter()
        .map(|&e| C64::new(0.0, -e * t).exp())
        .collect();
    let mut data = Array2::zeros((d, d));
    for m in 0..d {
        for n in 0..d {
            data[(m, n)] = phases[m] * tilde.get(m, n) * phases[n].conj();
        }
    }
    ComplexOperator::from_array_unchecked(data)
}

/// Uniform-grid midpoint sample times (j + 1/2) T / n.
fn sample_times(t_window: f64, n_samples: usize) -> impl Iterator<Item = f64> {
    let step = t_window / n_samples as f64;
    (0..n_samples).map(move |j| (j as f64 + 0.5) * step)
}

/// Finite-time average by quadrature: the uniform-grid mean of
/// e^{-iHt} rho e^{iHt} over [0, T]. Exists as a derivation-independent
/// cross-check of the analytic kernel.
pub fn finite_time_average_quadrature(
    rho0: &DensityMatrix,
    h: &ComplexOperator,
    t_window: f64,
    n_samples: usize,
) -> Result<DensityMatrix> {
    if t_window <= 0.0 || !t_window.is_finite() {
        return Err(Error::NonPositiveWindow { window: t_window });
    }
    if n_samples < 2 {
        return Err(Error::InvalidDims {
            reason: format!("quadrature needs at least 2 samples, got {n_samples}"),
        });
    }
    let decomp = qops::hermitian_eig_auto(h)?;
    let tilde = decomp.to_eigenbasis(rho0.op());
    let d = decomp.dim();
    let mut acc: Array2<C64> = Array2::zeros((d, d));
    for t in sample_times(t_window, n_samples) {
        acc = acc + evolve_in_eigenbasis(&decomp, &tilde, t).into_data();
    }
    let averaged = ComplexOperator::from_array_unchecked(acc.mapv(|z| z / n_samples as f64));
    let out = decomp.from_eigenbasis(&averaged).symmetrized();
    Ok(DensityMatrix::from_trusted(out, rho0.dims().to_vec()))
}

/// Time-average kernel for an energy difference `delta` over window `t`:
/// (1/T) int_0^T e^{-i delta t} dt = i (e^{-i delta T} - 1) / (delta T).
/// Degenerate pairs are handled by cluster membership, not by this function.
fn average_kernel(delta: f64, t_window: f64) -> C64 {
    let x = delta * t_window;
    C64::new(0.0, 1.0) * (C64::new(0.0, -x).exp() - C64::new(1.0, 0.0)) / x
}

/// Finite-time average through the analytic kernel: in the H eigenbasis the
/// (m, n) entry of rho is multiplied by 1 on a degenerate pair and by
/// i (e^{-i(E_m - E_n)T} - 1) / ((E_m - E_n)T) otherwise.
pub fn finite_time_average(
    rho0: &DensityMatrix,
    h: &ComplexOperator,
    t_window: f64,
) -> Result<DensityMatrix> {
    if t_window <= 0.0 || !t_window.is_finite() {
        return Err(Error::NonPositiveWindow { window: t_window });
    }
    let decomp = qops::hermitian_eig_auto(h)?;
    let mut tilde = decomp.to_eigenbasis(rho0.op()).into_data();
    let d = decomp.dim();
    let energies = decomp.eigenvalues();
    for m in 0..d {
        for n in 0..d {
            if decomp.cluster_of(m) != decomp.cluster_of(n) {
                tilde[(m, n)] *= average_kernel(energies[m] - energies[n], t_window);
            }
        }
    }
    let out = decomp
        .from_eigenbasis(&ComplexOperator::from_array_unchecked(tilde))
        .symmetrized();
    Ok(DensityMatrix::from_trusted(out, rho0.dims().to_vec()))
}

// ---------------------------------------------------------------------------
// Effective dimension and the equilibration bounds
// ---------------------------------------------------------------------------

/// Inverse participation ratio 1 / sum_n Tr(Pi_n rho)^2 over the degenerate
/// clusters of the decomposition.
pub fn effective_dimension(rho0: &DensityMatrix, decomp: &SpectralDecomposition) -> Result<f64> {
    if rho0.dim() != decomp.dim() {
        return Err(Error::DimensionMismatch {
            expected: decomp.dim(),
            got: rho0.dim(),
        });
    }
    let weights = decomp.cluster_populations(rho0.op());
    let sum_sq: f64 = weights.iter().map(|p| p.max(0.0).powi(2)).sum();
    Ok(1.0 / sum_sq)
}

fn require_no_equal_gaps(h: &ComplexOperator) -> Result<SpectralDecomposition> {
    let diag = diagnose_spectrum_auto(h)?;
    if diag.has_equal_gaps || !diag.is_nondegenerate {
        return Err(match diag.witness {
            Some(crate::hamiltonians::SpectrumWitness::EqualGaps { i1, j1, i2, j2 }) => {
                Error::EqualGapsDetected {
                    i1,
                    j1,
                    i2,
                    j2,
                    tolerance: diag.gap_tolerance,
                }
            }
            Some(crate::hamiltonians::SpectrumWitness::DegeneratePair { i, j }) => {
                Error::EqualGapsDetected {
                    i1: i,
                    j1: j,
                    i2: i,
                    j2: j,
                    tolerance: diag.gap_tolerance,
                }
            }
            None => unreachable!("flagged spectra carry a witness"),
        });
    }
    qops::hermitian_eig_auto(h)
}

/// Mean of |Tr(O rho(t)) - Tr(O rho_inf)|^2 on the sample grid, against the
/// bound ||O||^2 / d_eff. Requires a spectrum with no matching energy gaps.
pub fn check_observable_bound(
    rho0: &DensityMatrix,
    h: &ComplexOperator,
    observable: &ComplexOperator,
    t_window: f64,
    n_samples: usize,
) -> Result<EquilibrationReport> {
    if t_window <= 0.0 || !t_window.is_finite() {
        return Err(Error::NonPositiveWindow { window: t_window });
    }
    if observable.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.dim(),
            got: observable.dim(),
        });
    }
    let decomp = require_no_equal_gaps(h)?;
    let d = decomp.dim();
    let rho_tilde = decomp.to_eigenbasis(rho0.op());
    let obs_tilde = decomp.to_eigenbasis(observable);

    // Tr(O rho(t)) - Tr(O rho_inf) = sum over cross-cluster pairs of
    // O~_nm rho~_mn e^{-i(E_m - E_n) t}
    let mut amplitudes: Vec<(C64, f64)> = Vec::new();
    let energies = decomp.eigenvalues();
    for m in 0..d {
        for n in 0..d {
            if decomp.cluster_of(m) != decomp.cluster_of(n) {
                let c = obs_tilde.get(n, m) * rho_tilde.get(m, n);
                amplitudes.push((c, energies[m] - energies[n]));
            }
        }
    }
    // independent per-sample evaluation; ordered collect plus the tree sum
    // keeps the result identical for any thread count
    let times: Vec<f64> = sample_times(t_window, n_samples).collect();
    let samples: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let dev: C64 = amplitudes
                .iter()
                .map(|&(c, delta)| c * C64::new(0.0, -delta * t).exp())
                .sum();
            dev.norm_sqr()
        })
        .collect();
    let lhs = tree_mean(&samples);

    let d_eff = effective_dimension(rho0, &decomp)?;
    let rhs = observable.operator_norm()?.powi(2) / d_eff;
    Ok(EquilibrationReport {
        d_eff,
        observable_bound: Some(BoundCheck { lhs, rhs }),
        subsystem_bound: None,
        n_time_samples: n_samples,
        t_window,
    })
}

/// Mean trace distance between the evolving reduced state on `keep` and the
/// reduced equilibrium state, against the bound (1/2) sqrt(d^2 / d_eff).
pub fn check_subsystem_bound(
    rho0: &DensityMatrix,
    h: &ComplexOperator,
    keep: &[usize],
    t_window: f64,
    n_samples: usize,
) -> Result<EquilibrationReport> {
    if t_window <= 0.0 || !t_window.is_finite() {
        return Err(Error::NonPositiveWindow { window: t_window });
    }
    let decomp = require_no_equal_gaps(h)?;
    let rho_inf = pinch_with(rho0, &decomp)?;
    let sigma = rho_inf.reduce(keep)?;
    let d_keep = sigma.dim();

    let tilde = decomp.to_eigenbasis(rho0.op());
    let times: Vec<f64> = sample_times(t_window, n_samples).collect();
    let samples: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let evolved = decomp
                .from_eigenbasis(&evolve_in_eigenbasis(&decomp, &tilde, t))
                .symmetrized();
            let state = DensityMatrix::from_trusted(evolved, rho0.dims().to_vec());
            let reduced = state.reduce(keep)?;
            qops::trace_distance(&reduced, &sigma)
        })
        .collect::<Result<_>>()?;
    let lhs = tree_mean(&samples);

    let d_eff = effective_dimension(rho0, &decomp)?;
    let rhs = 0.5 * ((d_keep * d_keep) as f64 / d_eff).sqrt();
    Ok(EquilibrationReport {
        d_eff,
        observable_bound: None,
        subsystem_bound: Some(BoundCheck { lhs, rhs }),
        n_time_samples: n_samples,
        t_window,
    })
}

/// Pairwise tree sum; the fixed reduction structure keeps results bit-stable
/// regardless of how callers distribute the sample evaluation.
pub(crate) fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            tree_sum(lo) + tree_sum(hi)
        }
    }
}

fn tree_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        tree_sum(values) / values.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Structured equilibria
// ---------------------------------------------------------------------------

/// Equilibrium of a conditional Hamiltonian, computed branchwise.
#[derive(Debug, Clone)]
pub struct ConditionalEquilibrium {
    /// Pointer-basis outcome probabilities.
    pub probabilities: Vec<f64>,
    /// Pinched environment state per branch.
    pub branch_states: Vec<DensityMatrix>,
    /// Eigensystem of each branch generator.
    pub branch_decomps: Vec<SpectralDecomposition>,
    /// Full system (x) environment equilibrium state.
    pub state: DensityMatrix,
}

impl ConditionalEquilibrium {
    /// Number of distinct eigenvalues of each branch generator.
    pub fn branch_level_counts(&self) -> Vec<usize> {
        self.branch_decomps.iter().map(|d| d.n_clusters()).collect()
    }
}

/// Equilibrium of a star Hamiltonian with a product environment, computed
/// factor-wise: each observer state is pinched by its own branch generator.
#[derive(Debug, Clone)]
pub struct StarEquilibrium {
    pub probabilities: Vec<f64>,
    /// observer_states[branch i][observer k]
    pub observer_states: Vec<Vec<DensityMatrix>>,
    /// observer_decomps[branch i][observer k]: eigensystem of c_k H_k^(i)
    pub observer_decomps: Vec<Vec<SpectralDecomposition>>,
    pub state: DensityMatrix,
}

fn spectrum_gap_tolerance(entries: &[(f64, usize, usize)]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(e, _, _) in entries {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    tol::GAP_TOL_REL * (hi - lo)
}

/// Scan the composite spectrum (branch label, level index) for coincidences.
///
/// Pairs within the same branch whose levels sit in the same clusters are
/// harmless: the branchwise pinch keeps those coherences exactly like the
/// dense pinch does. Any other coincidence is admissible only when the
/// initial environment state has no matrix element between the two
/// eigenvectors; otherwise the equilibrium is not of classical-quantum form
/// and the branchwise construction would silently disagree with the dense
/// route.
fn scan_coincidences(
    mut entries: Vec<(f64, usize, usize)>,
    mut same_cluster: impl FnMut(usize, usize, usize) -> bool,
    mut eigvec_overlap: impl FnMut(usize, usize, usize, usize) -> f64,
) -> Result<()> {
    let gap_tolerance = spectrum_gap_tolerance(&entries);
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let n = entries.len();
    for a in 0..n {
        for b in (a + 1)..n {
            let (ea, ia, ma) = entries[a];
            let (eb, ib, mb) = entries[b];
            if eb - ea > gap_tolerance {
                break;
            }
            if ia == ib && same_cluster(ia, ma, mb) {
                continue;
            }
            let overlap = eigvec_overlap(ia, ma, ib, mb);
            if overlap > tol::BRANCH_OVERLAP {
                return Err(Error::DegenerateBranchStructure {
                    branch_i: ia,
                    branch_j: ib,
                    level_m: ma,
                    level_n: mb,
                    overlap,
                });
            }
        }
    }
    Ok(())
}

fn sandwich(bra: &[C64], op: &ComplexOperator, ket: &[C64]) -> C64 {
    let d = op.dim();
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..d {
        let mut row = C64::new(0.0, 0.0);
        for c in 0..d {
            row += op.get(r, c) * ket[c];
        }
        acc += bra[r].conj() * row;
    }
    acc
}

/// Branchwise equilibrium of a conditional Hamiltonian: d_S eigensolves of
/// the environment dimension instead of one full-space eigensolve. The
/// output equals the dense pinching of the assembled operator whenever the
/// coincidence scan passes.
pub fn conditional_equilibrium(
    spec: &ConditionalHamiltonianSpec,
    rho_s0: &DensityMatrix,
    rho_e0: &DensityMatrix,
) -> Result<ConditionalEquilibrium> {
    if rho_s0.dim() != spec.system_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.system_dim(),
            got: rho_s0.dim(),
        });
    }
    if rho_e0.dim() != spec.env_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.env_dim(),
            got: rho_e0.dim(),
        });
    }

    let branch_decomps: Vec<SpectralDecomposition> = spec
        .branch_ops()
        .iter()
        .map(qops::hermitian_eig_auto)
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(spec.system_dim() * spec.env_dim());
    for (i, decomp) in branch_decomps.iter().enumerate() {
        for (m, &e) in decomp.eigenvalues().iter().enumerate() {
            entries.push((e, i, m));
        }
    }
    let decomps_ref = &branch_decomps;
    scan_coincidences(
        entries,
        |i, m, n| decomps_ref[i].cluster_of(m) == decomps_ref[i].cluster_of(n),
        |i, m, j, n| {
            let d = spec.env_dim();
            let bra: Vec<C64> = (0..d)
                .map(|r| decomps_ref[i].eigenvectors().get(r, m))
                .collect();
            let ket: Vec<C64> = (0..d)
                .map(|r| decomps_ref[j].eigenvectors().get(r, n))
                .collect();
            sandwich(&bra, rho_e0.op(), &ket).norm()
        },
    )?;

    let probabilities = pointer_probabilities(rho_s0, spec.basis())?;
    let branch_states: Vec<DensityMatrix> = branch_decomps
        .iter()
        .map(|decomp| pinch_with(rho_e0, decomp))
        .collect::<Result<_>>()?;

    let state = assemble_cq_state(spec.basis(), &probabilities, &branch_states, rho_e0.dims())?;
    Ok(ConditionalEquilibrium {
        probabilities,
        branch_states,
        branch_decomps,
        state,
    })
}

/// Factor-wise equilibrium of a star Hamiltonian with a product environment:
/// every observer factor is pinched by its own coupled branch generator.
pub fn star_equilibrium(
    spec: &StarHamiltonianSpec,
    rho_s0: &DensityMatrix,
    env_factors: &[DensityMatrix],
) -> Result<StarEquilibrium> {
    if rho_s0.dim() != spec.system_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.system_dim(),
            got: rho_s0.dim(),
        });
    }
    if env_factors.len() != spec.n_observers() {
        return Err(Error::DimensionMismatch {
            expected: spec.n_observers(),
            got: env_factors.len(),
        });
    }
    let env_dims = spec.env_dims();
    for (k, factor) in env_factors.iter().enumerate() {
        if factor.dim() != env_dims[k] {
            return Err(Error::DimensionMismatch {
                expected: env_dims[k],
                got: factor.dim(),
            });
        }
    }

    let observer_decomps: Vec<Vec<SpectralDecomposition>> = (0..spec.system_dim())
        .map(|i| {
            (0..spec.n_observers())
                .map(|k| qops::hermitian_eig_auto(&spec.scaled_local_op(i, k)))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    // composite level index = mixed-radix digits of the per-factor levels
    let per_branch = star_composite_eigenvalues(spec)?;
    let mut entries = Vec::new();
    for (i, branch) in per_branch.iter().enumerate() {
        for (m, &e) in branch.iter().enumerate() {
            entries.push((e, i, m));
        }
    }
    let digits = |mut lin: usize| -> Vec<usize> {
        let mut out = vec![0usize; env_dims.len()];
        for k in (0..env_dims.len()).rev() {
            out[k] = lin % env_dims[k];
            lin /= env_dims[k];
        }
        out
    };
    // The joint environment is only consulted when a coincidence shows up;
    // building it lazily keeps the common path at the factor dimensions.
    let mut joint_env: Option<DensityMatrix> = None;
    let decomps_ref = &observer_decomps;
    scan_coincidences(
        entries,
        |i, m, n| {
            let (dm, dn) = (digits(m), digits(n));
            dm.iter().zip(dn.iter()).enumerate().all(|(k, (&a, &b))| {
                decomps_ref[i][k].cluster_of(a) == decomps_ref[i][k].cluster_of(b)
            })
        },
        |i, m, j, n| {
            let env = joint_env
                .get_or_insert_with(|| product_state(env_factors).expect("validated dims"));
            let ket_i = composite_eigenvector(&decomps_ref[i], &digits(m));
            let ket_j = composite_eigenvector(&decomps_ref[j], &digits(n));
            sandwich(&ket_i, env.op(), &ket_j).norm()
        },
    )?;

    let probabilities = pointer_probabilities(rho_s0, spec.basis())?;
    let observer_states: Vec<Vec<DensityMatrix>> = observer_decomps
        .iter()
        .map(|row| {
            row.iter()
                .zip(env_factors.iter())
                .map(|(decomp, factor)| pinch_with(factor, decomp))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let branch_states: Vec<DensityMatrix> = observer_states
        .iter()
        .map(|row| product_state(row))
        .collect::<Result<_>>()?;
    let state = assemble_cq_state(spec.basis(), &probabilities, &branch_states, &env_dims)?;
    Ok(StarEquilibrium {
        probabilities,
        observer_states,
        observer_decomps,
        state,
    })
}

fn composite_eigenvector(decomps: &[SpectralDecomposition], levels: &[usize]) -> Vec<C64> {
    let mut acc = vec![C64::new(1.0, 0.0)];
    for (decomp, &level) in decomps.iter().zip(levels.iter()) {
        let v = decomp.eigenvectors();
        let dk = v.dim();
        let mut next = Vec::with_capacity(acc.len() * dk);
        for &a in &acc {
            for r in 0..dk {
                next.push(a * v.get(r, level));
            }
        }
        acc = next;
    }
    acc
}

/// sum_i p_i |b_i><b_i| (x) rho_E^(i).
fn assemble_cq_state(
    basis: &PointerBasis,
    probabilities: &[f64],
    branch_states: &[DensityMatrix],
    env_dims: &[usize],
) -> Result<DensityMatrix> {
    let d_s = basis.dim();
    let d_e = branch_states[0].dim();
    let total = d_s * d_e;
    if total > qops::max_dim() {
        return Err(Error::DimensionOverflow {
            dim: total,
            max_dim: qops::max_dim(),
        });
    }
    let mut acc = if basis.is_computational() {
        // block-diagonal by construction; write the weighted branch blocks
        // in place instead of accumulating full-space tensor products
        let mut data: Array2<C64> = Array2::zeros((total, total));
        for (i, (p, branch)) in probabilities.iter().zip(branch_states.iter()).enumerate() {
            if *p == 0.0 {
                continue;
            }
            let weight = C64::new(*p, 0.0);
            let block = branch.op().data();
            for a in 0..d_e {
                for b in 0..d_e {
                    data[(i * d_e + a, i * d_e + b)] = weight * block[(a, b)];
                }
            }
        }
        ComplexOperator::from_array_unchecked(data)
    } else {
        let mut acc = ComplexOperator::zeros(total);
        for (i, (p, branch)) in probabilities.iter().zip(branch_states.iter()).enumerate() {
            if *p == 0.0 {
                continue;
            }
            let term = qops::tensor(&basis.projector(i), branch.op())?;
            acc = acc.add(&term.scale_real(*p));
        }
        acc
    };
    acc = acc.symmetrized();
    let mut dims = Vec::with_capacity(1 + env_dims.len());
    dims.push(d_s);
    dims.extend_from_slice(env_dims);
    Ok(DensityMatrix::from_trusted(acc, dims))
}

/// Equilibrium of the product-form Hamiltonian X_S (x) Y: the dephased
/// system state tensored with the pinched environment state, carrying no
/// system-environment correlations. Requires all products x_i eps_m to be
/// pairwise distinct.
pub fn von_neumann_equilibrium(
    spec: &VonNeumannSpec,
    rho_s0: &DensityMatrix,
    rho_e0: &DensityMatrix,
) -> Result<DensityMatrix> {
    if rho_s0.dim() != spec.system_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.system_dim(),
            got: rho_s0.dim(),
        });
    }
    if rho_e0.dim() != spec.env_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.env_dim(),
            got: rho_e0.dim(),
        });
    }
    let env_decomp = qops::hermitian_eig_auto(spec.env_op())?;
    let eps = env_decomp.eigenvalues();
    let xs = spec.pointer_values();

    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(xs.len() * eps.len());
    for (i, &x) in xs.iter().enumerate() {
        for (m, &e) in eps.iter().enumerate() {
            entries.push((x * e, i, m));
        }
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let range = entries[entries.len() - 1].0 - entries[0].0;
    let gap_tolerance = tol::GAP_TOL_REL * range;
    for w in entries.windows(2) {
        if w[1].0 - w[0].0 <= gap_tolerance {
            return Err(Error::ResonantEigenvalues {
                i: w[0].1,
                m: w[0].2,
                j: w[1].1,
                n: w[1].2,
                tolerance: gap_tolerance,
            });
        }
    }

    let basis = PointerBasis::computational(spec.system_dim());
    let probabilities = pointer_probabilities(rho_s0, &basis)?;
    let pinched_env = pinch_with(rho_e0, &env_decomp)?;
    let branch_states = vec![pinched_env; spec.system_dim()];
    assemble_cq_state(&basis, &probabilities, &branch_states, rho_e0.dims())
}
