//! Broadcast-structure diagnostics: conditional-state extraction, fidelity
//! matrices and their analytic lower bounds, the per-observer overlap sums
//! and exponential decay constants for macro-observers, classical-quantum
//! distance, faithfulness, and the structural certification of conditional
//! Hamiltonians.

use ndarray::Array2;
use rand::Rng;

use crate::equilibration::StarEquilibrium;
use crate::error::{Error, Result};
use crate::qops::{self, ComplexOperator, SpectralDecomposition, C64};
use crate::states::{random_density_with, seeded_rng, DensityMatrix, PointerBasis};
use crate::tol;

/// Grouping of observer factors into macro-observers. Groups are disjoint
/// subsets of the observer indices and need not cover all of them.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MacroPartition {
    groups: Vec<Vec<usize>>,
}

impl MacroPartition {
    pub fn new(groups: Vec<Vec<usize>>, n_observers: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidPartition {
                reason: "at least one group is required".into(),
            });
        }
        let mut seen = vec![false; n_observers];
        for group in &groups {
            if group.is_empty() {
                return Err(Error::InvalidPartition {
                    reason: "groups must be non-empty".into(),
                });
            }
            for &k in group {
                if k >= n_observers {
                    return Err(Error::InvalidPartition {
                        reason: format!("observer index {k} out of range (N = {n_observers})"),
                    });
                }
                if std::mem::replace(&mut seen[k], true) {
                    return Err(Error::InvalidPartition {
                        reason: format!("observer index {k} appears in two groups"),
                    });
                }
            }
        }
        Ok(Self { groups })
    }

    /// One macro-observer holding the first `size` observers.
    pub fn leading_block(size: usize, n_observers: usize) -> Result<Self> {
        if size == 0 || size > n_observers {
            return Err(Error::InvalidPartition {
                reason: format!("block size {size} out of range (N = {n_observers})"),
            });
        }
        Self::new(vec![(0..size).collect()], n_observers)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }
}

/// Conditional observer states with the eigensystems that produced them,
/// indexed [branch i][observer k]. Rows for branches below the probability
/// floor may be empty.
#[derive(Debug, Clone)]
pub struct ObserverGrid {
    probabilities: Vec<f64>,
    states: Vec<Vec<DensityMatrix>>,
    decomps: Vec<Vec<SpectralDecomposition>>,
}

impl ObserverGrid {
    pub fn new(
        probabilities: Vec<f64>,
        states: Vec<Vec<DensityMatrix>>,
        decomps: Vec<Vec<SpectralDecomposition>>,
    ) -> Result<Self> {
        let d_s = probabilities.len();
        if states.len() != d_s || decomps.len() != d_s {
            return Err(Error::DimensionMismatch {
                expected: d_s,
                got: states.len().max(decomps.len()),
            });
        }
        let n = states
            .iter()
            .map(|row| row.len())
            .max()
            .unwrap_or(0);
        for (i, p) in probabilities.iter().enumerate() {
            if *p > tol::P_FLOOR {
                if states[i].len() != n {
                    return Err(Error::IncompleteGrid {
                        branch: i,
                        observer: states[i].len(),
                    });
                }
                if decomps[i].len() != n {
                    return Err(Error::IncompleteGrid {
                        branch: i,
                        observer: decomps[i].len(),
                    });
                }
            }
        }
        Ok(Self {
            probabilities,
            states,
            decomps,
        })
    }

    pub fn from_star_equilibrium(eq: &StarEquilibrium) -> Result<Self> {
        Self::new(
            eq.probabilities.clone(),
            eq.observer_states.clone(),
            eq.observer_decomps.clone(),
        )
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn n_observers(&self) -> usize {
        self.states.iter().map(|row| row.len()).max().unwrap_or(0)
    }

    /// Branch indices above the probability floor.
    pub fn live_branches(&self) -> Vec<usize> {
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > tol::P_FLOOR)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn state(&self, branch: usize, observer: usize) -> &DensityMatrix {
        &self.states[branch][observer]
    }

    pub fn decomp(&self, branch: usize, observer: usize) -> &SpectralDecomposition {
        &self.decomps[branch][observer]
    }
}

/// Per-pair exponential decay data for one macro-observer group.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MacroPairDecay {
    pub branch_i: usize,
    pub branch_j: usize,
    /// Product of the per-site fidelities over the group.
    pub fidelity: f64,
    /// -2 ln(max eta over the decaying sites); infinite when some eta = 0.
    pub gamma: f64,
    /// Number of group sites with eta < 1.
    pub effective_size: usize,
    /// exp(-gamma * effective_size); 0 when gamma is infinite.
    pub bound: f64,
}

/// Fidelity matrices, overlap sums, and decay constants for a partition.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MacroFidelityReport {
    pub live_branches: Vec<usize>,
    /// micro_fidelity[k][i][j] = F(rho_k^(i), rho_k^(j)); entries for dead
    /// branches stay 0.
    pub micro_fidelity: Vec<Vec<Vec<f64>>>,
    /// eta[k][i][j]: per-observer overlap sums (diagonal = 1).
    pub eta: Vec<Vec<Vec<f64>>>,
    /// One entry per group and unordered live pair (i < j).
    pub groups: Vec<Vec<MacroPairDecay>>,
}

impl MacroFidelityReport {
    /// Largest pairwise macro fidelity in group `q`.
    pub fn max_pair_fidelity(&self, q: usize) -> f64 {
        self.groups[q]
            .iter()
            .map(|pair| pair.fidelity)
            .fold(0.0, f64::max)
    }
}

/// Overlap sum eta = sum_m sqrt(<eps_m| rho_i rho_j |eps_m>) over the
/// eigenvectors of the decomposition that pinched rho_i. Upper-bounds
/// sqrt(F(rho_i, rho_j)) when rho_i is diagonal in that basis.
pub fn eta(
    rho_i: &DensityMatrix,
    rho_j: &DensityMatrix,
    decomp_i: &SpectralDecomposition,
) -> Result<f64> {
    if rho_i.dim() != rho_j.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_i.dim(),
            got: rho_j.dim(),
        });
    }
    if rho_i.dim() != decomp_i.dim() {
        return Err(Error::DimensionMismatch {
            expected: decomp_i.dim(),
            got: rho_i.dim(),
        });
    }
    let product = rho_i.op().dot(rho_j.op());
    let tilde = decomp_i.to_eigenbasis(&product);
    Ok((0..decomp_i.dim())
        .map(|m| tilde.get(m, m).re.max(0.0).sqrt())
        .sum())
}

/// exp(-gamma |N_q^(ij)|) decay data for one group and one branch pair.
fn pair_decay(
    grid: &ObserverGrid,
    group: &[usize],
    branch_i: usize,
    branch_j: usize,
    micro_fidelity: &[Vec<Vec<f64>>],
    etas: &[Vec<Vec<f64>>],
) -> MacroPairDecay {
    let fidelity: f64 = group
        .iter()
        .map(|&k| micro_fidelity[k][branch_i][branch_j])
        .product();
    // sites with eta numerically at 1 carry no decay and are excluded
    let decaying: Vec<f64> = group
        .iter()
        .map(|&k| etas[k][branch_i][branch_j])
        .filter(|&e| e < 1.0 - tol::ETA_UNIT_EPS)
        .collect();
    let effective_size = decaying.len();
    let eta_max = decaying.iter().copied().fold(0.0, f64::max);
    let (gamma, bound) = if effective_size == 0 {
        (0.0, 1.0)
    } else if eta_max <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let gamma = -2.0 * eta_max.ln();
        (gamma, (-gamma * effective_size as f64).exp())
    };
    let _ = grid;
    MacroPairDecay {
        branch_i,
        branch_j,
        fidelity,
        gamma,
        effective_size,
        bound,
    }
}

/// Micro fidelities, overlap sums, and per-group decay data. Macro
/// fidelities are evaluated through the product law, exact for the product
/// conditionals the star equilibrium produces.
pub fn macro_fidelity_matrix(
    grid: &ObserverGrid,
    partition: &MacroPartition,
) -> Result<MacroFidelityReport> {
    let n = grid.n_observers();
    for group in partition.groups() {
        if let Some(&bad) = group.iter().find(|&&k| k >= n) {
            return Err(Error::InvalidPartition {
                reason: format!("observer index {bad} out of range (N = {n})"),
            });
        }
    }
    let live = grid.live_branches();
    let d_s = grid.probabilities().len();

    let mut micro = vec![vec![vec![0.0; d_s]; d_s]; n];
    let mut etas = vec![vec![vec![0.0; d_s]; d_s]; n];
    for k in 0..n {
        for &i in &live {
            micro[k][i][i] = 1.0;
            etas[k][i][i] = 1.0;
        }
        for a in 0..live.len() {
            for b in (a + 1)..live.len() {
                let (i, j) = (live[a], live[b]);
                let f = qops::fidelity(grid.state(i, k), grid.state(j, k))?;
                micro[k][i][j] = f;
                micro[k][j][i] = f;
                etas[k][i][j] = eta(grid.state(i, k), grid.state(j, k), grid.decomp(i, k))?;
                etas[k][j][i] = eta(grid.state(j, k), grid.state(i, k), grid.decomp(j, k))?;
            }
        }
    }

    let groups = partition
        .groups()
        .iter()
        .map(|group| {
            let mut pairs = Vec::new();
            for a in 0..live.len() {
                for b in (a + 1)..live.len() {
                    pairs.push(pair_decay(grid, group, live[a], live[b], &micro, &etas));
                }
            }
            pairs
        })
        .collect();

    Ok(MacroFidelityReport {
        live_branches: live,
        micro_fidelity: micro,
        eta: etas,
        groups,
    })
}

/// Analytic lower bounds on the fidelity of two pinched states sharing the
/// initial environment state: the purity-based bound Tr(rho^2)/(d_i d_j)
/// and the dimensional bound 1/d_E^2.
pub fn fidelity_lower_bound(
    rho_e0: &DensityMatrix,
    d_i: usize,
    d_j: usize,
    d_e: usize,
) -> Result<(f64, f64)> {
    if d_i == 0 || d_j == 0 || d_i > d_e || d_j > d_e {
        return Err(Error::InvalidDims {
            reason: format!("level counts must satisfy 1 <= d_i, d_j <= d_E (got {d_i}, {d_j}, {d_e})"),
        });
    }
    let tight = rho_e0.purity() / (d_i as f64 * d_j as f64);
    let loose = 1.0 / (d_e as f64 * d_e as f64);
    Ok((tight, loose))
}

fn pointer_frame(rho: &DensityMatrix, basis: &PointerBasis) -> Result<(ComplexOperator, usize)> {
    let d_s = basis.dim();
    if rho.dim() % d_s != 0 {
        return Err(Error::DimensionMismatch {
            expected: d_s,
            got: rho.dim(),
        });
    }
    let d_e = rho.dim() / d_s;
    let rotated = if basis.is_computational() {
        rho.op().clone()
    } else {
        let u_full = qops::tensor(basis.matrix(), &ComplexOperator::identity(d_e))?;
        u_full.adjoint().dot(rho.op()).dot(&u_full)
    };
    Ok((rotated, d_e))
}

fn pointer_block(rotated: &ComplexOperator, d_e: usize, i: usize, j: usize) -> Array2<C64> {
    Array2::from_shape_fn((d_e, d_e), |(a, b)| rotated.get(i * d_e + a, j * d_e + b))
}

/// Extract branch probabilities and normalized conditional environment
/// states from a classical-quantum state. Branches at or below the
/// probability floor come back as `None`.
pub fn conditional_env_states(
    rho: &DensityMatrix,
    basis: &PointerBasis,
) -> Result<(Vec<f64>, Vec<Option<DensityMatrix>>)> {
    let (rotated, d_e) = pointer_frame(rho, basis)?;
    let d_s = basis.dim();

    let mut max_off_block = 0.0f64;
    for i in 0..d_s {
        for j in 0..d_s {
            if i != j {
                let block = pointer_block(&rotated, d_e, i, j);
                let worst = block.iter().map(|z| z.norm()).fold(0.0, f64::max);
                max_off_block = max_off_block.max(worst);
            }
        }
    }
    if max_off_block > tol::OFF_BLOCK {
        return Err(Error::NotBlockDiagonal { max_off_block });
    }
    extract_pointer_blocks(&rotated, d_e, d_s, rho.dims())
}

fn extract_pointer_blocks(
    rotated: &ComplexOperator,
    d_e: usize,
    d_s: usize,
    dims: &[usize],
) -> Result<(Vec<f64>, Vec<Option<DensityMatrix>>)> {
    let env_dims: Vec<usize> = if dims.len() > 1 && dims[0] == d_s {
        dims[1..].to_vec()
    } else {
        vec![d_e]
    };
    let mut probabilities = Vec::with_capacity(d_s);
    let mut states = Vec::with_capacity(d_s);
    for i in 0..d_s {
        let block = pointer_block(rotated, d_e, i, i);
        let p: f64 = (0..d_e).map(|a| block[(a, a)].re).sum();
        probabilities.push(p.max(0.0));
        if p > tol::P_FLOOR {
            let op = ComplexOperator::from_array_unchecked(block.mapv(|z| z / p)).symmetrized();
            states.push(Some(DensityMatrix::from_trusted(op, env_dims.clone())));
        } else {
            states.push(None);
        }
    }
    Ok((probabilities, states))
}

/// Trace distance between a state and its pointer-block-diagonal projection;
/// zero exactly when the state is classical-quantum in the given basis.
pub fn cq_distance(rho: &DensityMatrix, basis: &PointerBasis) -> Result<f64> {
    let (rotated, d_e) = pointer_frame(rho, basis)?;
    let d_s = basis.dim();
    let mut projected = rotated.data().clone();
    for i in 0..d_s {
        for j in 0..d_s {
            if i != j {
                for a in 0..d_e {
                    for b in 0..d_e {
                        projected[(i * d_e + a, j * d_e + b)] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
    qops::trace_distance_hermitian(
        &rotated,
        &ComplexOperator::from_array_unchecked(projected),
    )
}

/// Largest departure from broadcast structure over: pairwise macro-observer
/// fidelities, the classical-quantum distance, and the distance of each
/// conditional state from the product of its group marginals (the strong
/// independence deviation). Zero exactly on broadcast-structured states.
pub fn sbs_deviation(
    rho: &DensityMatrix,
    basis: &PointerBasis,
    partition: &MacroPartition,
) -> Result<f64> {
    let (rotated, d_e) = pointer_frame(rho, basis)?;
    let d_s = basis.dim();
    let (probabilities, conditionals) = extract_pointer_blocks(&rotated, d_e, d_s, rho.dims())?;

    let env_dims: Vec<usize> = if rho.dims().len() > 1 && rho.dims()[0] == d_s {
        rho.dims()[1..].to_vec()
    } else {
        vec![d_e]
    };
    let n = env_dims.len();
    for group in partition.groups() {
        if let Some(&bad) = group.iter().find(|&&k| k >= n) {
            return Err(Error::InvalidPartition {
                reason: format!("observer index {bad} out of range (N = {n})"),
            });
        }
    }

    let live: Vec<usize> = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > tol::P_FLOOR)
        .map(|(i, _)| i)
        .collect();

    let mut deviation: f64 = cq_distance(rho, basis)?;

    // group marginals per live branch
    let mut marginals: Vec<Vec<DensityMatrix>> = Vec::with_capacity(live.len());
    for &i in &live {
        let cond = conditionals[i].as_ref().expect("live branch");
        let row = partition
            .groups()
            .iter()
            .map(|group| cond.reduce(group))
            .collect::<Result<Vec<_>>>()?;
        marginals.push(row);
    }

    // pairwise macro fidelities on the actual reduced states
    for a in 0..live.len() {
        for b in (a + 1)..live.len() {
            for q in 0..partition.n_groups() {
                let f = qops::fidelity(&marginals[a][q], &marginals[b][q])?;
                deviation = deviation.max(f);
            }
        }
    }

    // strong independence: conditional vs product of its group marginals,
    // compared on the group-covered factors in their original order
    let covered: Vec<usize> = {
        let mut all: Vec<usize> = partition.groups().iter().flatten().copied().collect();
        all.sort_unstable();
        all
    };
    let group_order: Vec<usize> = partition.groups().iter().flatten().copied().collect();
    // permutation taking the group-ordered product to ascending factor order
    let perm: Vec<usize> = covered
        .iter()
        .map(|&k| group_order.iter().position(|&g| g == k).unwrap())
        .collect();
    let product_dims: Vec<usize> = group_order.iter().map(|&k| env_dims[k]).collect();

    for (idx, &i) in live.iter().enumerate() {
        let cond = conditionals[i].as_ref().expect("live branch");
        let reduced = cond.reduce(&covered)?;
        let product = crate::states::product_state(&marginals[idx])?;
        let aligned = qops::permute_factors(product.op(), &product_dims, &perm)?;
        let d = qops::trace_distance_hermitian(reduced.op(), &aligned)?;
        deviation = deviation.max(d);
    }

    Ok(deviation)
}

/// Outcome of the faithfulness check: can the pointer outcomes be read out
/// by orthogonal projectors commuting with the conditional states?
#[derive(Debug, Clone, serde::Serialize)]
pub struct FaithfulnessCheck {
    pub faithful: bool,
    /// sum_i p_i Tr(Pi_i rho_E^(i)) with Pi_i the support projectors.
    pub achieved_weight: f64,
    /// Largest singular value of Pi_i Pi_j over live pairs i != j.
    pub max_support_overlap: f64,
}

/// Build the support projector of each conditional state and test the
/// supports for pairwise orthogonality.
pub fn check_faithfulness(rho: &DensityMatrix, basis: &PointerBasis) -> Result<FaithfulnessCheck> {
    let (probabilities, conditionals) = conditional_env_states(rho, basis)?;
    let live: Vec<usize> = probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > tol::P_FLOOR)
        .map(|(i, _)| i)
        .collect();

    let mut supports = Vec::with_capacity(live.len());
    let mut achieved_weight = 0.0;
    for &i in &live {
        let cond = conditionals[i].as_ref().expect("live branch");
        let decomp = qops::hermitian_eig_auto(cond.op())?;
        let d = cond.dim();
        let mut proj: Array2<C64> = Array2::zeros((d, d));
        for (m, &lambda) in decomp.eigenvalues().iter().enumerate() {
            if lambda > tol::P_FLOOR {
                let v = decomp.eigenvectors();
                for r in 0..d {
                    for c in 0..d {
                        proj[(r, c)] += v.get(r, m) * v.get(c, m).conj();
                    }
                }
            }
        }
        let proj = ComplexOperator::from_array_unchecked(proj);
        achieved_weight += probabilities[i] * proj.dot(cond.op()).trace().re;
        supports.push(proj);
    }

    let mut max_support_overlap = 0.0f64;
    for a in 0..supports.len() {
        for b in (a + 1)..supports.len() {
            let overlap = supports[a].dot(&supports[b]).operator_norm()?;
            max_support_overlap = max_support_overlap.max(overlap);
        }
    }
    let faithful = max_support_overlap <= tol::FAITHFUL_OVERLAP
        && (achieved_weight - 1.0).abs() <= tol::BOUND_SLACK;
    Ok(FaithfulnessCheck {
        faithful,
        achieved_weight,
        max_support_overlap,
    })
}

/// Outcome of the conditional-structure certification.
#[derive(Debug, Clone)]
pub struct CqCommutationCheck {
    /// All sampled classical-quantum states commute with H and the
    /// off-pointer-diagonal blocks of H vanish.
    pub certified: bool,
    pub max_commutator_norm: f64,
    pub max_off_block: f64,
    /// First sampled state whose commutator with H exceeded the threshold.
    pub witness: Option<DensityMatrix>,
}

/// Certify (or refute) that H commutes with every classical-quantum state
/// in the given pointer basis: random CQ states are sampled as numerical
/// evidence and the off-pointer-diagonal blocks of H are checked directly.
pub fn verify_cq_commutation(
    h: &ComplexOperator,
    basis: &PointerBasis,
    trials: usize,
    seed: u64,
) -> Result<CqCommutationCheck> {
    h.ensure_hermitian(tol::HERMITICITY)?;
    let d_s = basis.dim();
    if h.dim() % d_s != 0 {
        return Err(Error::DimensionMismatch {
            expected: d_s,
            got: h.dim(),
        });
    }
    let d_e = h.dim() / d_s;

    // structural part: off-pointer-diagonal blocks of H in the basis frame
    let rotated = if basis.is_computational() {
        h.clone()
    } else {
        let u_full = qops::tensor(basis.matrix(), &ComplexOperator::identity(d_e))?;
        u_full.adjoint().dot(h).dot(&u_full)
    };
    let mut max_off_block = 0.0f64;
    for i in 0..d_s {
        for j in 0..d_s {
            if i != j {
                let block = pointer_block(&rotated, d_e, i, j);
                let worst = block.iter().map(|z| z.norm()).fold(0.0, f64::max);
                max_off_block = max_off_block.max(worst);
            }
        }
    }

    // CQ states can only be stationary when their conditionals are; draw
    // conditionals pinched by the diagonal pointer blocks of H, which is
    // exactly the shape equilibration produces. For a true conditional H the
    // commutator then vanishes identically; any off-block term leaves a
    // residue a random trial picks up.
    let block_decomps: Vec<SpectralDecomposition> = (0..d_s)
        .map(|i| {
            let block =
                ComplexOperator::from_array_unchecked(pointer_block(&rotated, d_e, i, i));
            qops::hermitian_eig_auto(&block.symmetrized())
        })
        .collect::<Result<_>>()?;

    let mut rng = seeded_rng(seed);
    let mut max_commutator_norm = 0.0f64;
    let mut witness = None;
    for _ in 0..trials {
        let state = random_stationary_cq_state(basis, d_e, &block_decomps, &mut rng)?;
        let comm = qops::commutator(h, state.op());
        let norm = comm.operator_norm()?;
        max_commutator_norm = max_commutator_norm.max(norm);
        if norm > tol::CQ_COMMUTATOR && witness.is_none() {
            witness = Some(state);
        }
    }

    let certified = witness.is_none() && max_off_block <= tol::STRUCTURAL_OFF_BLOCK;
    Ok(CqCommutationCheck {
        certified,
        max_commutator_norm,
        max_off_block,
        witness,
    })
}

fn random_stationary_cq_state(
    basis: &PointerBasis,
    d_e: usize,
    block_decomps: &[SpectralDecomposition],
    rng: &mut impl Rng,
) -> Result<DensityMatrix> {
    let d_s = basis.dim();
    // probabilities from normalized unit-rate exponentials
    let mut p: Vec<f64> = (0..d_s).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
    let total: f64 = p.iter().sum();
    for pi in &mut p {
        *pi /= total;
    }
    let mut acc = ComplexOperator::zeros(d_s * d_e);
    for (i, &pi) in p.iter().enumerate() {
        let raw = random_density_with(d_e, d_e, rng)?;
        let cond = crate::equilibration::pinch_with(&raw, &block_decomps[i])?;
        let term = qops::tensor(&basis.projector(i), cond.op())?;
        acc = acc.add(&term.scale_real(pi));
    }
    Ok(DensityMatrix::from_trusted(
        acc.symmetrized(),
        vec![d_s, d_e],
    ))
}
