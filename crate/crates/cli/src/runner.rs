//! Scenario execution: deterministic, seed-driven pipelines for each
//! experiment family, producing a [`ResultRecord`] and pass/fail verdicts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sbs_core::equilibration::{
    check_observable_bound, check_subsystem_bound, conditional_equilibrium, finite_time_average,
    pinch_auto, star_equilibrium, von_neumann_equilibrium,
};
use sbs_core::hamiltonians::{
    diagnose_spectrum_auto, random_branch_ensemble, random_hermitian, ConditionalHamiltonianSpec,
    StarHamiltonianSpec, VonNeumannSpec,
};
use sbs_core::objectivity::{
    check_faithfulness, conditional_env_states, cq_distance, fidelity_lower_bound,
    macro_fidelity_matrix, sbs_deviation, verify_cq_commutation, MacroPartition, ObserverGrid,
};
use sbs_core::qops;
use sbs_core::states::{
    pointer_probabilities, product_state, random_density, seeded_uniforms, DensityMatrix,
    HilbertFactorization, PointerBasis,
};

use crate::config::{ConfigError, ExperimentKind, HamiltonianFamily, ScenarioConfig};
use crate::report::{
    emit_csv, write_json, DecayRow, FidelityEntry, OutputPaths, Payload, ResultRecord, StageTime,
    Timing, Verdict,
};

/// Failure classes map onto the exit-code contract: Config → 2, the rest → 3.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(sbs_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e}"),
            Self::Numerical(e) => write!(f, "numerical error: {e}"),
            Self::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<sbs_core::Error> for RunError {
    fn from(e: sbs_core::Error) -> Self {
        Self::Numerical(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

/// splitmix64 step; derives stage seeds from the scenario seed.
fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct StageClock {
    stages: Vec<StageTime>,
}

impl StageClock {
    fn new() -> Self {
        Self { stages: Vec::new() }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTime {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

const DRAW_RETRIES: u64 = 16;

/// Execute one scenario, returning the record without writing any files.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ResultRecord, RunError> {
    config.validate()?;
    let mut payload = Payload::new(config.clone());
    let mut clock = StageClock::new();
    match config.experiment {
        ExperimentKind::Impossibility => {
            clock.time("impossibility", || run_impossibility(config, &mut payload))?
        }
        ExperimentKind::StandardModel => {
            clock.time("standard-model", || run_standard_model(config, &mut payload))?
        }
        ExperimentKind::SbsScaling => {
            clock.time("sbs-scaling", || run_sbs_scaling(config, &mut payload))?
        }
        ExperimentKind::EquilibrationBounds => clock.time("equilibration-bounds", || {
            run_equilibration_bounds(config, &mut payload)
        })?,
        ExperimentKind::Custom => clock.time("custom", || run_custom(config, &mut payload))?,
    }
    Ok(ResultRecord {
        payload,
        timing: Timing {
            stages: clock.stages,
        },
    })
}

/// Execute a scenario and persist `<output_path>.json` plus the CSV tables.
pub fn run_and_write(
    config: &ScenarioConfig,
    output_base: &Path,
) -> Result<(ResultRecord, OutputPaths), RunError> {
    let record = run_scenario(config)?;
    write_json(&record, output_base)?;
    let paths = emit_csv(&record, output_base)?;
    Ok((record, paths))
}

// ---------------------------------------------------------------------------
// impossibility: conditional equilibria vs the fidelity lower bounds
// ---------------------------------------------------------------------------

fn run_impossibility(config: &ScenarioConfig, payload: &mut Payload) -> Result<(), RunError> {
    let seed = config.seed;
    let d_s = config.dims.system_dim;
    let d_e = config.dims.env_dim();
    let basis = PointerBasis::computational(d_s);

    let branch_ops: Vec<_> = (0..d_s)
        .map(|i| random_hermitian(d_e, derive_seed(seed, 100 + i as u64)))
        .collect();
    let spec = ConditionalHamiltonianSpec::new(basis.clone(), branch_ops)?;
    let rho_s0 = random_density(d_s, d_s, derive_seed(seed, 1))?;
    // pure shared environment: the regime where the purity bound dominates
    // the dimensional one
    let rho_e0 = random_density(d_e, 1, derive_seed(seed, 2))?;

    let eq = conditional_equilibrium(&spec, &rho_s0, &rho_e0)?;
    // extraction route, independent of the branchwise construction
    let (probs, extracted) = conditional_env_states(&eq.state, &basis)?;
    let counts = eq.branch_level_counts();

    let slack = config.tolerance("fidelity_bound_slack");
    let mut min_fidelity = f64::INFINITY;
    let mut min_tight = f64::INFINITY;
    let live: Vec<usize> = (0..d_s).filter(|&i| extracted[i].is_some()).collect();
    for a in 0..live.len() {
        for b in (a + 1)..live.len() {
            let (i, j) = (live[a], live[b]);
            let f = qops::fidelity(
                extracted[i].as_ref().unwrap(),
                extracted[j].as_ref().unwrap(),
            )?;
            let (tight, loose) = fidelity_lower_bound(&rho_e0, counts[i], counts[j], d_e)?;
            payload.fidelity_entries.push(FidelityEntry {
                observer: 0,
                i,
                j,
                value: f,
            });
            payload.verdicts.push(Verdict::lower(
                format!("fidelity_above_purity_bound_{i}_{j}"),
                f,
                tight - slack,
                "fidelity_bound_slack",
            ));
            payload.verdicts.push(Verdict::lower(
                format!("purity_bound_above_dimensional_bound_{i}_{j}"),
                tight,
                loose - slack,
                "fidelity_bound_slack",
            ));
            min_fidelity = min_fidelity.min(f);
            min_tight = min_tight.min(tight);
        }
    }

    payload.scalars.insert("env_purity".into(), rho_e0.purity());
    payload.scalars.insert("min_pair_fidelity".into(), min_fidelity);
    payload.scalars.insert("min_purity_bound".into(), min_tight);
    payload
        .scalars
        .insert("dimensional_bound".into(), 1.0 / (d_e as f64 * d_e as f64));
    payload.scalars.insert(
        "branch_probability_sum".into(),
        probs.iter().sum::<f64>(),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// standard-model: product coupling equilibrates without correlations
// ---------------------------------------------------------------------------

fn run_standard_model(config: &ScenarioConfig, payload: &mut Payload) -> Result<(), RunError> {
    let seed = config.seed;
    let d_s = config.dims.system_dim;
    let d_e = config.dims.env_dim();

    let rho_s0 = random_density(d_s, d_s, derive_seed(seed, 1))?;
    let rho_e0 = random_density(d_e, d_e, derive_seed(seed, 2))?;

    let mut outcome = None;
    for attempt in 0..DRAW_RETRIES {
        let xs = if config.hamiltonian.pointer_values.is_empty() {
            seeded_uniforms(d_s, 0.5, 1.5, derive_seed(seed, 10 + attempt))
        } else {
            config.hamiltonian.pointer_values.clone()
        };
        let y = random_hermitian(d_e, derive_seed(seed, 40 + attempt));
        let spec = VonNeumannSpec::new(xs, y)?;
        match von_neumann_equilibrium(&spec, &rho_s0, &rho_e0) {
            Ok(eq) => {
                outcome = Some((spec, eq));
                break;
            }
            Err(sbs_core::Error::ResonantEigenvalues { .. })
                if config.hamiltonian.pointer_values.is_empty() =>
            {
                continue;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let (spec, eq) = outcome.ok_or(RunError::Numerical(
        sbs_core::Error::DegenerateAfterRetries {
            attempts: DRAW_RETRIES as usize,
        },
    ))?;

    let mi = qops::mutual_information(&eq.with_dims(vec![d_s, d_e])?, [d_s, d_e])?;
    payload.verdicts.push(Verdict::upper(
        "no-correlation",
        mi,
        config.tolerance("mutual_information_max"),
        "mutual_information_max",
    ));

    // independent reconstruction of the expected product form
    let basis = PointerBasis::computational(d_s);
    let probs = pointer_probabilities(&rho_s0, &basis)?;
    let dephased = DensityMatrix::new_flat(qops::ComplexOperator::diag_real(&probs))?;
    let pinched = pinch_auto(&rho_e0, spec.env_op())?;
    let product = product_state(&[dephased, pinched])?;
    let distance = qops::trace_distance(&eq, &product)?;
    payload.verdicts.push(Verdict::upper(
        "product-form",
        distance,
        config.tolerance("product_distance_max"),
        "product_distance_max",
    ));

    let partition = MacroPartition::leading_block(
        config.dims.env_dims.len(),
        config.dims.env_dims.len(),
    )
    .expect("validated dims");
    let deviation = sbs_deviation(&eq, &basis, &partition)?;
    payload.scalars.insert("mutual_information".into(), mi);
    payload.scalars.insert("product_distance".into(), distance);
    payload.scalars.insert("sbs_deviation".into(), deviation);
    payload
        .scalars
        .insert("cq_distance".into(), cq_distance(&eq, &basis)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// sbs-scaling: exponential approach to broadcast structure
// ---------------------------------------------------------------------------

fn run_sbs_scaling(config: &ScenarioConfig, payload: &mut Payload) -> Result<(), RunError> {
    let seed = config.seed;
    let d_s = config.dims.system_dim;
    let fact = HilbertFactorization::new(d_s, config.dims.env_dims.clone())?;
    let n = fact.n_observers();

    let mut spec = random_branch_ensemble(&fact, d_s, seed)?;
    if !config.hamiltonian.couplings.is_empty() {
        spec = StarHamiltonianSpec::new(
            spec.basis().clone(),
            config.hamiltonian.couplings.clone(),
            spec.local_ops().to_vec(),
        )?;
    }
    let rho_s0 = random_density(d_s, d_s, derive_seed(seed, 1))?;
    let factors: Vec<DensityMatrix> = fact
        .env_dims()
        .iter()
        .enumerate()
        .map(|(k, &dk)| random_density(dk, dk, derive_seed(seed, 20 + k as u64)))
        .collect::<sbs_core::Result<_>>()?;

    let eq = star_equilibrium(&spec, &rho_s0, &factors)?;
    let grid = ObserverGrid::from_star_equilibrium(&eq)?;
    let live = grid.live_branches();

    // flattened micro fidelity matrix
    let mut sizes = config.effective_partition_sizes();
    sizes.sort_unstable();
    let probe = macro_fidelity_matrix(&grid, &MacroPartition::leading_block(1, n)?)?;
    for k in 0..n {
        for a in 0..live.len() {
            for b in (a + 1)..live.len() {
                payload.fidelity_entries.push(FidelityEntry {
                    observer: k,
                    i: live[a],
                    j: live[b],
                    value: probe.micro_fidelity[k][live[a]][live[b]],
                });
            }
        }
    }

    let decay_slack = config.tolerance("decay_bound_slack");
    let product_law_max = config.tolerance("product_law_max");
    let mut max_fid_per_size = Vec::new();
    for &size in &sizes {
        let partition = MacroPartition::leading_block(size, n)?;
        let report = macro_fidelity_matrix(&grid, &partition)?;
        let mut max_fid: f64 = 0.0;
        for pair in &report.groups[0] {
            payload.decay_table.push(DecayRow {
                group_size: size,
                pair_i: pair.branch_i,
                pair_j: pair.branch_j,
                fidelity: pair.fidelity,
                gamma: pair.gamma.is_finite().then_some(pair.gamma),
                bound: pair.bound,
            });
            payload.verdicts.push(Verdict::upper(
                format!("decay_bound_size{}_pair{}_{}", size, pair.branch_i, pair.branch_j),
                pair.fidelity,
                pair.bound + decay_slack,
                "decay_bound_slack",
            ));
            max_fid = max_fid.max(pair.fidelity);

            // dual route: direct fidelity of the tensored conditionals
            let group_dim: usize = fact.env_dims()[..size].iter().product();
            if group_dim <= 64 {
                let rho_i = product_state(&eq.observer_states[pair.branch_i][..size])?;
                let rho_j = product_state(&eq.observer_states[pair.branch_j][..size])?;
                let direct = qops::fidelity(&rho_i, &rho_j)?;
                payload.verdicts.push(Verdict::upper(
                    format!(
                        "product_law_size{}_pair{}_{}",
                        size, pair.branch_i, pair.branch_j
                    ),
                    (direct - pair.fidelity).abs(),
                    product_law_max,
                    "product_law_max",
                ));
            }
        }
        max_fid_per_size.push(max_fid);
    }

    // nested leading blocks only shed fidelity as they grow
    let worst_increase = max_fid_per_size
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    if max_fid_per_size.len() > 1 {
        payload.verdicts.push(Verdict::upper(
            "fidelity_monotone_nonincreasing",
            worst_increase,
            config.tolerance("monotonicity_slack"),
            "monotonicity_slack",
        ));
    }

    let basis = PointerBasis::computational(d_s);
    payload
        .scalars
        .insert("cq_distance".into(), cq_distance(&eq.state, &basis)?);
    if let Some(&largest) = sizes.last() {
        let partition = MacroPartition::leading_block(largest, n)?;
        payload.scalars.insert(
            "sbs_deviation_at_largest_size".into(),
            sbs_deviation(&eq.state, &basis, &partition)?,
        );
        payload.scalars.insert(
            "max_fidelity_at_largest_size".into(),
            *max_fid_per_size.last().unwrap(),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// equilibration-bounds: observable and subsystem averages vs d_eff
// ---------------------------------------------------------------------------

fn run_equilibration_bounds(
    config: &ScenarioConfig,
    payload: &mut Payload,
) -> Result<(), RunError> {
    let seed = config.seed;
    let total = config.dims.total_dim();

    let mut drawn = None;
    for attempt in 0..DRAW_RETRIES {
        let h = random_hermitian(total, derive_seed(seed, 30 + attempt));
        let diag = diagnose_spectrum_auto(&h)?;
        if !diag.has_equal_gaps && diag.is_nondegenerate {
            drawn = Some((h, diag));
            break;
        }
    }
    let (h, diag) = drawn.ok_or(RunError::Numerical(
        sbs_core::Error::DegenerateAfterRetries {
            attempts: DRAW_RETRIES as usize,
        },
    ))?;

    let mut dims = vec![config.dims.system_dim];
    dims.extend_from_slice(&config.dims.env_dims);
    let rho0 = random_density(total, total, derive_seed(seed, 31))?.with_dims(dims)?;
    let observable = random_hermitian(total, derive_seed(seed, 32));

    let slack = config.tolerance("bound_slack");
    for &multiple in &config.time_window_multiples {
        let t_window = multiple / diag.min_gap;
        let obs = check_observable_bound(&rho0, &h, &observable, t_window, config.n_time_samples)?;
        let sub = check_subsystem_bound(&rho0, &h, &[0], t_window, config.n_time_samples)?;
        payload.scalars.insert("d_eff".into(), obs.d_eff);
        // the averages only settle under the bound for long windows
        if multiple >= 100.0 {
            let bound = obs.observable_bound.unwrap();
            payload.verdicts.push(Verdict::upper(
                format!("observable_bound_T{multiple}"),
                bound.lhs,
                bound.rhs + slack,
                "bound_slack",
            ));
            let bound = sub.subsystem_bound.unwrap();
            payload.verdicts.push(Verdict::upper(
                format!("subsystem_bound_T{multiple}"),
                bound.lhs,
                bound.rhs + slack,
                "bound_slack",
            ));
        }
        payload.equilibration_reports.push(obs);
        payload.equilibration_reports.push(sub);
    }
    payload.scalars.insert("min_gap".into(), diag.min_gap);
    Ok(())
}

// ---------------------------------------------------------------------------
// custom: assemble the configured family and report diagnostics
// ---------------------------------------------------------------------------

fn run_custom(config: &ScenarioConfig, payload: &mut Payload) -> Result<(), RunError> {
    let seed = config.seed;
    let d_s = config.dims.system_dim;
    let d_e = config.dims.env_dim();
    let basis = PointerBasis::computational(d_s);

    match config.hamiltonian.family {
        HamiltonianFamily::Star => {
            let fact = HilbertFactorization::new(d_s, config.dims.env_dims.clone())?;
            let spec = random_branch_ensemble(&fact, d_s, seed)?;
            let rho_s0 = random_density(d_s, d_s, derive_seed(seed, 1))?;
            let factors: Vec<DensityMatrix> = fact
                .env_dims()
                .iter()
                .enumerate()
                .map(|(k, &dk)| random_density(dk, dk, derive_seed(seed, 20 + k as u64)))
                .collect::<sbs_core::Result<_>>()?;
            let eq = star_equilibrium(&spec, &rho_s0, &factors)?;
            let n = fact.n_observers();
            let partition = MacroPartition::leading_block(n, n)?;
            payload
                .scalars
                .insert("cq_distance".into(), cq_distance(&eq.state, &basis)?);
            payload.scalars.insert(
                "sbs_deviation".into(),
                sbs_deviation(&eq.state, &basis, &partition)?,
            );
            let check = verify_cq_commutation(&spec.assemble()?, &basis, 4, derive_seed(seed, 3))?;
            payload
                .scalars
                .insert("cq_certified".into(), f64::from(check.certified));
        }
        HamiltonianFamily::Conditional => {
            let branch_ops: Vec<_> = (0..d_s)
                .map(|i| random_hermitian(d_e, derive_seed(seed, 100 + i as u64)))
                .collect();
            let spec = ConditionalHamiltonianSpec::new(basis.clone(), branch_ops)?;
            let rho_s0 = random_density(d_s, d_s, derive_seed(seed, 1))?;
            let rho_e0 = random_density(d_e, d_e, derive_seed(seed, 2))?;
            let eq = conditional_equilibrium(&spec, &rho_s0, &rho_e0)?;
            let faith = check_faithfulness(&eq.state, &basis)?;
            payload
                .scalars
                .insert("faithful".into(), f64::from(faith.faithful));
            payload
                .scalars
                .insert("max_support_overlap".into(), faith.max_support_overlap);
            payload
                .scalars
                .insert("cq_distance".into(), cq_distance(&eq.state, &basis)?);
            let check = verify_cq_commutation(&spec.assemble()?, &basis, 4, derive_seed(seed, 3))?;
            payload
                .scalars
                .insert("cq_certified".into(), f64::from(check.certified));
        }
        HamiltonianFamily::VonNeumann => {
            let xs = if config.hamiltonian.pointer_values.is_empty() {
                seeded_uniforms(d_s, 0.5, 1.5, derive_seed(seed, 10))
            } else {
                config.hamiltonian.pointer_values.clone()
            };
            let spec = VonNeumannSpec::new(xs, random_hermitian(d_e, derive_seed(seed, 40)))?;
            let rho_s0 = random_density(d_s, d_s, derive_seed(seed, 1))?;
            let rho_e0 = random_density(d_e, d_e, derive_seed(seed, 2))?;
            let eq = von_neumann_equilibrium(&spec, &rho_s0, &rho_e0)?;
            payload.scalars.insert(
                "mutual_information".into(),
                qops::mutual_information(&eq.with_dims(vec![d_s, d_e])?, [d_s, d_e])?,
            );
            payload
                .scalars
                .insert("cq_distance".into(), cq_distance(&eq, &basis)?);
        }
        HamiltonianFamily::Explicit => {
            let total = config.dims.total_dim();
            let h = random_hermitian(total, derive_seed(seed, 30));
            let diag = diagnose_spectrum_auto(&h)?;
            payload.scalars.insert("min_gap".into(), diag.min_gap);
            payload.scalars.insert(
                "is_nondegenerate".into(),
                f64::from(diag.is_nondegenerate),
            );
            payload
                .scalars
                .insert("has_equal_gaps".into(), f64::from(diag.has_equal_gaps));
            let rho0 = random_density(total, total, derive_seed(seed, 31))?;
            let decomp = qops::hermitian_eig_auto(&h)?;
            payload.scalars.insert(
                "d_eff".into(),
                sbs_core::equilibration::effective_dimension(&rho0, &decomp)?,
            );
            if let Some(&largest) = config
                .time_window_multiples
                .iter()
                .max_by(|a, b| a.partial_cmp(b).unwrap())
                .as_deref()
                .map(Some)
                .unwrap_or(None)
            {
                let t_window = largest / diag.min_gap;
                let avg = finite_time_average(&rho0, &h, t_window)?;
                let pinched = sbs_core::equilibration::pinch_with(&rho0, &decomp)?;
                payload.scalars.insert(
                    "finite_time_average_gap_to_pinch".into(),
                    qops::trace_distance(&avg, &pinched)?,
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// suite: run every config in a directory
// ---------------------------------------------------------------------------

/// Overrides supplied on the command line or via environment variables.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Apply option overrides: seed replaces the config seed, out replaces the
/// output base path (for suites: a directory joined with the config stem).
pub fn apply_overrides(config: &mut ScenarioConfig, overrides: &Overrides) {
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.output_path = out.display().to_string();
    }
}

/// Outcome of one suite entry.
pub struct SuiteEntry {
    pub config_path: PathBuf,
    pub result: Result<ResultRecord, RunError>,
}

/// Run every `*.toml` in the directory, in file-name order. Output paths come
/// from each config, or `<out_dir>/<config_stem>` when an override directory
/// is given.
pub fn run_suite(dir: &Path, overrides: &Overrides) -> Result<Vec<SuiteEntry>, RunError> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
        .collect();
    configs.sort();

    let mut entries = Vec::new();
    for path in configs {
        let result = crate::config::load_config(&path)
            .map_err(RunError::from)
            .and_then(|mut config| {
                if let Some(seed) = overrides.seed {
                    config.seed = seed;
                }
                if let Some(out_dir) = &overrides.out {
                    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                    config.output_path = out_dir.join(stem.as_ref()).display().to_string();
                }
                let base = PathBuf::from(&config.output_path);
                run_and_write(&config, &base).map(|(record, _)| record)
            });
        entries.push(SuiteEntry {
            config_path: path,
            result,
        });
    }
    Ok(entries)
}
