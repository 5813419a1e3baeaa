//! Acceptance suite: one test per headline criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Tolerances are pinned in the
//! assertions; seeds are fixed so every run exercises identical instances.

use std::path::Path;
use std::time::{Duration, Instant};

use sbs_core::equilibration::{
    check_observable_bound, check_subsystem_bound, conditional_equilibrium, finite_time_average,
    pinch_auto, pinch_with, star_equilibrium,
};
use sbs_core::hamiltonians::{
    diagnose_spectrum_auto, random_branch_ensemble, random_hermitian, ConditionalHamiltonianSpec,
    StarHamiltonianSpec, VonNeumannSpec,
};
use sbs_core::objectivity::{
    conditional_env_states, fidelity_lower_bound, macro_fidelity_matrix, verify_cq_commutation,
    MacroPartition, ObserverGrid,
};
use sbs_core::qops::{
    self, fidelity, hermitian_eig_auto, mutual_information, pinch_as_mixed_unitary,
    trace_distance, ComplexOperator, C64,
};
use sbs_core::states::{
    pointer_probabilities, product_state, random_density, seeded_uniforms, DensityMatrix,
    HilbertFactorization, PointerBasis,
};

fn report(criterion: &str, pass: bool, detail: &str, elapsed: Duration) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("[{status}] {criterion}: {detail} ({:.2}s)", elapsed.as_secs_f64());
    assert!(pass, "{criterion}: {detail}");
}

// Criterion 1 — pinching oracle equivalence on 100 seeded instances
// (dims 4..=16): projector-sum vs mixed-unitary within 1e-10, and the
// analytic finite-time average at T = 1e6/min_gap within 1e-3 of the pinch.
#[test]
fn c1_pinching_oracle_equivalence() {
    let start = Instant::now();
    let mut worst_oracle = 0.0f64;
    let mut worst_window = 0.0f64;
    for seed in 0..100u64 {
        let dim = 4 + (seed as usize) % 13; // 4..=16
        let rho = random_density(dim, dim, 1_000 + seed).unwrap();
        let h = random_hermitian(dim, 2_000 + seed);
        let decomp = hermitian_eig_auto(&h).unwrap();

        let pinched = pinch_with(&rho, &decomp).unwrap();
        let mixed = pinch_as_mixed_unitary(&rho, &decomp).unwrap();
        worst_oracle = worst_oracle.max(trace_distance(&pinched, &mixed).unwrap());

        let t_window = 1e6 / decomp.min_cluster_gap();
        let averaged = finite_time_average(&rho, &h, t_window).unwrap();
        worst_window = worst_window.max(trace_distance(&averaged, &pinched).unwrap());
    }
    let elapsed = start.elapsed();
    let pass = worst_oracle <= 1e-10 && worst_window <= 1e-3 && elapsed < Duration::from_secs(30);
    report(
        "criterion 1 (pinching oracle equivalence)",
        pass,
        &format!(
            "max mixed-unitary distance {worst_oracle:.2e} (<= 1e-10), \
             max finite-window distance {worst_window:.2e} (<= 1e-3)"
        ),
        elapsed,
    );
}

// Criterion 2 — equilibration bounds on 50 seeded no-equal-gap instances
// (total dim <= 16, T = 1e3/min_gap, 4000 samples): lhs <= rhs + 1e-9 for
// both the observable and the subsystem bound.
#[test]
fn c2_equilibration_bounds() {
    let start = Instant::now();
    let mut worst_margin = f64::NEG_INFINITY;
    for instance in 0..50u64 {
        let total = [8usize, 12, 16][(instance % 3) as usize];
        let mut h = None;
        for attempt in 0..16u64 {
            let candidate = random_hermitian(total, 3_000 + 31 * instance + attempt);
            let diag = diagnose_spectrum_auto(&candidate).unwrap();
            if diag.is_nondegenerate && !diag.has_equal_gaps {
                h = Some((candidate, diag.min_gap));
                break;
            }
        }
        let (h, min_gap) = h.expect("generic spectra have no matching gaps");
        let rho0 = random_density(total, total, 4_000 + instance)
            .unwrap()
            .with_dims(vec![2, total / 2])
            .unwrap();
        let observable = random_hermitian(total, 5_000 + instance);
        let t_window = 1e3 / min_gap;

        let obs = check_observable_bound(&rho0, &h, &observable, t_window, 4000).unwrap();
        let bound = obs.observable_bound.unwrap();
        assert!(
            bound.holds(1e-9),
            "instance {instance}: observable lhs {} > rhs {}",
            bound.lhs,
            bound.rhs
        );
        worst_margin = worst_margin.max(bound.lhs - bound.rhs);

        let sub = check_subsystem_bound(&rho0, &h, &[0], t_window, 4000).unwrap();
        let bound = sub.subsystem_bound.unwrap();
        assert!(
            bound.holds(1e-9),
            "instance {instance}: subsystem lhs {} > rhs {}",
            bound.lhs,
            bound.rhs
        );
        worst_margin = worst_margin.max(bound.lhs - bound.rhs);
    }
    let elapsed = start.elapsed();
    let pass = worst_margin <= 1e-9 && elapsed < Duration::from_secs(120);
    report(
        "criterion 2 (equilibration bounds)",
        pass,
        &format!("worst lhs - rhs = {worst_margin:.3e} over 50 instances (<= 1e-9)"),
        elapsed,
    );
}

// Criterion 3 — impossibility bound on 50 seeded conditional equilibria with
// a shared pure environment state, d_E in {4, 8, 16}: every pairwise
// conditional fidelity >= purity/(d_i d_j) - 1e-9 >= 1/d_E^2 - 1e-9.
#[test]
fn c3_impossibility_bound() {
    let start = Instant::now();
    let mut worst_fidelity_margin = f64::INFINITY;
    let mut worst_chain_margin = f64::INFINITY;
    for instance in 0..50u64 {
        let d_e = [4usize, 8, 16][(instance % 3) as usize];
        let basis = PointerBasis::computational(2);
        let spec = ConditionalHamiltonianSpec::new(
            basis.clone(),
            vec![
                random_hermitian(d_e, 6_000 + 2 * instance),
                random_hermitian(d_e, 6_001 + 2 * instance),
            ],
        )
        .unwrap();
        let rho_s0 = random_density(2, 2, 7_000 + instance).unwrap();
        let rho_e0 = random_density(d_e, 1, 8_000 + instance).unwrap();
        let eq = conditional_equilibrium(&spec, &rho_s0, &rho_e0).unwrap();

        // extract through the pointer blocks rather than reusing the
        // branchwise construction
        let (_, states) = conditional_env_states(&eq.state, &basis).unwrap();
        let f = fidelity(
            states[0].as_ref().expect("live branch"),
            states[1].as_ref().expect("live branch"),
        )
        .unwrap();
        let counts = eq.branch_level_counts();
        let (tight, loose) = fidelity_lower_bound(&rho_e0, counts[0], counts[1], d_e).unwrap();
        assert!(
            f >= tight - 1e-9,
            "instance {instance}: F = {f} < tight bound {tight}"
        );
        assert!(
            tight >= loose - 1e-9,
            "instance {instance}: tight {tight} < loose {loose}"
        );
        worst_fidelity_margin = worst_fidelity_margin.min(f - tight);
        worst_chain_margin = worst_chain_margin.min(tight - loose);
    }
    let elapsed = start.elapsed();
    let pass = worst_fidelity_margin >= -1e-9
        && worst_chain_margin >= -1e-9
        && elapsed < Duration::from_secs(60);
    report(
        "criterion 3 (impossibility bound)",
        pass,
        &format!(
            "min F - tight = {worst_fidelity_margin:.3e}, min tight - loose = \
             {worst_chain_margin:.3e} over 50 instances (>= -1e-9)"
        ),
        elapsed,
    );
}

// Criterion 4 — standard measurement model on 50 seeded non-resonant
// instances: equilibrium mutual information <= 1e-10 and trace distance to
// (dephased system) (x) (pinched environment) <= 1e-10.
#[test]
fn c4_standard_model_no_correlation() {
    let start = Instant::now();
    let mut worst_mi = 0.0f64;
    let mut worst_distance = 0.0f64;
    for instance in 0..50u64 {
        let d_e = [4usize, 8][(instance % 2) as usize];
        let rho_s0 = random_density(2, 2, 9_000 + instance).unwrap();
        let rho_e0 = random_density(d_e, d_e, 10_000 + instance).unwrap();

        let mut outcome = None;
        for attempt in 0..16u64 {
            let xs = seeded_uniforms(2, 0.5, 1.5, 11_000 + 17 * instance + attempt);
            let y = random_hermitian(d_e, 12_000 + 17 * instance + attempt);
            let spec = VonNeumannSpec::new(xs, y).unwrap();
            match sbs_core::equilibration::von_neumann_equilibrium(&spec, &rho_s0, &rho_e0) {
                Ok(eq) => {
                    outcome = Some((spec, eq));
                    break;
                }
                Err(sbs_core::Error::ResonantEigenvalues { .. }) => continue,
                Err(e) => panic!("instance {instance}: {e}"),
            }
        }
        let (spec, eq) = outcome.expect("non-resonant draw");

        let mi = mutual_information(&eq.with_dims(vec![2, d_e]).unwrap(), [2, d_e]).unwrap();
        worst_mi = worst_mi.max(mi);

        let probs =
            pointer_probabilities(&rho_s0, &PointerBasis::computational(2)).unwrap();
        let dephased = DensityMatrix::new_flat(ComplexOperator::diag_real(&probs)).unwrap();
        let pinched = pinch_auto(&rho_e0, spec.env_op()).unwrap();
        let product = product_state(&[dephased, pinched]).unwrap();
        worst_distance = worst_distance.max(trace_distance(&eq, &product).unwrap());
    }
    let elapsed = start.elapsed();
    let pass =
        worst_mi <= 1e-10 && worst_distance <= 1e-10 && elapsed < Duration::from_secs(60);
    report(
        "criterion 4 (standard-model no-correlation)",
        pass,
        &format!(
            "max mutual information {worst_mi:.2e} (<= 1e-10), \
             max product distance {worst_distance:.2e} (<= 1e-10)"
        ),
        elapsed,
    );
}

// Criterion 5 — exponential approach to broadcast structure: star instance
// with d_S = 2 and N = 8 qubits, leading-block sizes 1..=8. Macro fidelity
// stays under exp(-gamma |N_q^(ij)|) + 1e-9, the product law matches the
// direct tensor-state fidelity within 1e-10, and for i.i.d. branch draws the
// log-fidelity is linear in the block size with residual < 1e-9.
#[test]
fn c5_exponential_sbs_approach() {
    let start = Instant::now();
    let n = 8usize;
    let fact = HilbertFactorization::new(2, vec![2; n]).unwrap();
    let spec = random_branch_ensemble(&fact, 2, 13_000).unwrap();
    let rho_s0 = random_density(2, 2, 13_001).unwrap();
    let factors: Vec<DensityMatrix> = (0..n)
        .map(|k| random_density(2, 2, 13_010 + k as u64).unwrap())
        .collect();
    let eq = star_equilibrium(&spec, &rho_s0, &factors).unwrap();
    let grid = ObserverGrid::from_star_equilibrium(&eq).unwrap();

    let mut worst_bound_margin = f64::NEG_INFINITY;
    let mut worst_product_law = 0.0f64;
    for size in 1..=n {
        let partition = MacroPartition::leading_block(size, n).unwrap();
        let fid_report = macro_fidelity_matrix(&grid, &partition).unwrap();
        for pair in &fid_report.groups[0] {
            worst_bound_margin = worst_bound_margin.max(pair.fidelity - pair.bound);

            let rho_i = product_state(&eq.observer_states[pair.branch_i][..size]).unwrap();
            let rho_j = product_state(&eq.observer_states[pair.branch_j][..size]).unwrap();
            let direct = fidelity(&rho_i, &rho_j).unwrap();
            worst_product_law = worst_product_law.max((direct - pair.fidelity).abs());
        }
    }

    // i.i.d. draws: one branch pair replicated across all sites (distinct
    // couplings leave the per-site pinches identical)
    let local = vec![
        vec![random_hermitian(2, 13_100); n],
        vec![random_hermitian(2, 13_101); n],
    ];
    let couplings = seeded_uniforms(n, 0.5, 1.5, 13_102);
    let iid_spec =
        StarHamiltonianSpec::new(PointerBasis::computational(2), couplings, local).unwrap();
    let site = random_density(2, 2, 13_103).unwrap();
    let iid_factors = vec![site; n];
    let iid_eq = star_equilibrium(&iid_spec, &rho_s0, &iid_factors).unwrap();
    let iid_grid = ObserverGrid::from_star_equilibrium(&iid_eq).unwrap();
    let mut log_f = Vec::new();
    for size in 1..=n {
        let partition = MacroPartition::leading_block(size, n).unwrap();
        let fid_report = macro_fidelity_matrix(&iid_grid, &partition).unwrap();
        log_f.push((size as f64, fid_report.groups[0][0].fidelity.ln()));
    }
    // least-squares line through (size, ln F); residuals measure linearity
    let n_pts = log_f.len() as f64;
    let sx: f64 = log_f.iter().map(|(x, _)| x).sum();
    let sy: f64 = log_f.iter().map(|(_, y)| y).sum();
    let sxx: f64 = log_f.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = log_f.iter().map(|(x, y)| x * y).sum();
    let slope = (n_pts * sxy - sx * sy) / (n_pts * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n_pts;
    let max_residual = log_f
        .iter()
        .map(|(x, y)| (y - (intercept + slope * x)).abs())
        .fold(0.0, f64::max);

    let elapsed = start.elapsed();
    let pass = worst_bound_margin <= 1e-9
        && worst_product_law <= 1e-10
        && max_residual < 1e-9
        && elapsed < Duration::from_secs(60);
    report(
        "criterion 5 (exponential SBS approach)",
        pass,
        &format!(
            "max F - bound = {worst_bound_margin:.3e} (<= 1e-9), \
             max |direct - product law| = {worst_product_law:.2e} (<= 1e-10), \
             iid log-fidelity residual = {max_residual:.2e} (< 1e-9)"
        ),
        elapsed,
    );
}

// Criterion 6 — branchwise fast path: conditional (branchwise) and star
// (factor-wise) equilibria match the dense full-space pinch within 1e-10 on
// 50 seeded instances, and the branchwise route is at least 5x faster at
// d_S = 4, d_E = 256.
#[test]
fn c6_branchwise_fast_path() {
    // the speedup ratio compares O(d^3) eigensolve work; BLAS-internal
    // threading would skew it
    qops::set_blas_threads(1);
    let start = Instant::now();
    let mut worst_distance = 0.0f64;
    for instance in 0..25u64 {
        let d_e = [4usize, 8][(instance % 2) as usize];
        let spec = ConditionalHamiltonianSpec::new(
            PointerBasis::computational(2),
            vec![
                random_hermitian(d_e, 14_000 + 2 * instance),
                random_hermitian(d_e, 14_001 + 2 * instance),
            ],
        )
        .unwrap();
        let rho_s0 = random_density(2, 2, 15_000 + instance).unwrap();
        let rho_e0 = random_density(d_e, d_e, 16_000 + instance).unwrap();
        let eq = conditional_equilibrium(&spec, &rho_s0, &rho_e0).unwrap();
        let joint = product_state(&[rho_s0, rho_e0]).unwrap();
        let dense = pinch_auto(&joint, &spec.assemble().unwrap()).unwrap();
        worst_distance = worst_distance.max(trace_distance(&eq.state, &dense).unwrap());
    }
    for instance in 0..25u64 {
        let fact = HilbertFactorization::new(2, vec![2, 2, 2]).unwrap();
        let spec = random_branch_ensemble(&fact, 2, 17_000 + instance).unwrap();
        let rho_s0 = random_density(2, 2, 18_000 + instance).unwrap();
        let factors: Vec<DensityMatrix> = (0..3)
            .map(|k| random_density(2, 2, 19_000 + 3 * instance + k as u64).unwrap())
            .collect();
        let eq = star_equilibrium(&spec, &rho_s0, &factors).unwrap();
        let mut parts = vec![rho_s0];
        parts.extend(factors);
        let joint = product_state(&parts).unwrap();
        let dense = pinch_auto(&joint, &spec.assemble().unwrap()).unwrap();
        worst_distance = worst_distance.max(trace_distance(&eq.state, &dense).unwrap());
    }

    // timing at d_S = 4, d_E = 256
    let d_s = 4usize;
    let d_e = 256usize;
    let spec = ConditionalHamiltonianSpec::new(
        PointerBasis::computational(d_s),
        (0..d_s)
            .map(|i| random_hermitian(d_e, 20_000 + i as u64))
            .collect(),
    )
    .unwrap();
    let rho_s0 = random_density(d_s, d_s, 20_100).unwrap();
    let rho_e0 = random_density(d_e, d_e, 20_101).unwrap();
    let joint = product_state(&[rho_s0.clone(), rho_e0.clone()]).unwrap();
    let h = spec.assemble().unwrap();

    // two passes each; the faster pass per route smooths scheduler noise
    let mut branch_time = f64::INFINITY;
    let mut dense_time = f64::INFINITY;
    let mut branch_state = None;
    let mut dense_state = None;
    for _ in 0..2 {
        let t0 = Instant::now();
        branch_state = Some(conditional_equilibrium(&spec, &rho_s0, &rho_e0).unwrap());
        branch_time = branch_time.min(t0.elapsed().as_secs_f64());
        let t1 = Instant::now();
        dense_state = Some(pinch_auto(&joint, &h).unwrap());
        dense_time = dense_time.min(t1.elapsed().as_secs_f64());
    }
    let speedup = dense_time / branch_time;
    let large_distance = trace_distance(
        &branch_state.unwrap().state,
        &dense_state.unwrap(),
    )
    .unwrap();
    worst_distance = worst_distance.max(large_distance);

    let elapsed = start.elapsed();
    let pass = worst_distance <= 1e-10 && speedup >= 5.0;
    report(
        "criterion 6 (branchwise fast path)",
        pass,
        &format!(
            "max |branchwise - dense| = {worst_distance:.2e} (<= 1e-10), \
             speedup at d_S=4, d_E=256: {speedup:.1}x (>= 5x; branch {branch_time:.2}s, \
             dense {dense_time:.2}s)"
        ),
        elapsed,
    );
}

// Criterion 7 — structural certification: conditional-form generators are
// accepted; 100 seeded single-entry off-block perturbations (>= 1e-3) are
// rejected with a witness state.
#[test]
fn c7_structural_certification() {
    let start = Instant::now();
    let basis = PointerBasis::computational(2);

    let mut accepted = 0usize;
    for seed in 0..10u64 {
        let spec = ConditionalHamiltonianSpec::new(
            basis.clone(),
            vec![
                random_hermitian(8, 21_000 + 2 * seed),
                random_hermitian(8, 21_001 + 2 * seed),
            ],
        )
        .unwrap();
        let check =
            verify_cq_commutation(&spec.assemble().unwrap(), &basis, 8, 22_000 + seed).unwrap();
        if check.certified && check.witness.is_none() {
            accepted += 1;
        }
    }

    let mut rejected = 0usize;
    for seed in 0..100u64 {
        let spec = ConditionalHamiltonianSpec::new(
            basis.clone(),
            vec![
                random_hermitian(8, 23_000 + 2 * seed),
                random_hermitian(8, 23_001 + 2 * seed),
            ],
        )
        .unwrap();
        let mut data = spec.assemble().unwrap().into_data();
        // one entry in the (0, 1) pointer block, seeded position, >= 1e-3
        let row = (seed as usize * 3) % 8;
        let col = 8 + (seed as usize * 5) % 8;
        let magnitude = 1e-3 * (1.0 + (seed as f64) / 100.0);
        data[(row, col)] += C64::new(magnitude, 0.0);
        data[(col, row)] += C64::new(magnitude, 0.0);
        let h = ComplexOperator::from_array(data).unwrap();
        let check = verify_cq_commutation(&h, &basis, 8, 24_000 + seed).unwrap();
        if !check.certified && check.witness.is_some() {
            rejected += 1;
        }
    }

    let elapsed = start.elapsed();
    let pass = accepted == 10 && rejected == 100;
    report(
        "criterion 7 (structural certification)",
        pass,
        &format!("accepted {accepted}/10 conditional forms, rejected {rejected}/100 perturbed"),
        elapsed,
    );
}

// Criterion 8 — determinism: `suite` run twice over identical configs
// produces byte-identical deterministic payloads (and CSV tables).
#[test]
fn c8_suite_determinism() {
    let start = Instant::now();
    let work = tempfile::tempdir().unwrap();
    let configs = work.path().join("configs");
    let out = work.path().join("out");
    std::fs::create_dir_all(&configs).unwrap();

    let scaling = format!(
        r#"
experiment = "sbs-scaling"
seed = 42
output_path = "{}/scaling"

[dims]
system_dim = 2
env_dims = [2, 2, 2]

[hamiltonian]
family = "star"
"#,
        out.display()
    );
    let standard = format!(
        r#"
experiment = "standard-model"
seed = 43
output_path = "{}/standard"

[dims]
system_dim = 2
env_dims = [4]

[hamiltonian]
family = "von-neumann"
"#,
        out.display()
    );
    let impossibility = format!(
        r#"
experiment = "impossibility"
seed = 44
output_path = "{}/impossibility"

[dims]
system_dim = 2
env_dims = [8]

[hamiltonian]
family = "conditional"
"#,
        out.display()
    );
    std::fs::write(configs.join("a_scaling.toml"), scaling).unwrap();
    std::fs::write(configs.join("b_standard.toml"), standard).unwrap();
    std::fs::write(configs.join("c_impossibility.toml"), impossibility).unwrap();

    let run_suite = || {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_sbs"))
            .arg("suite")
            .arg(&configs)
            .status()
            .expect("suite runs");
        assert!(status.success(), "suite exited with {status}");
        let mut snapshot = std::collections::BTreeMap::new();
        for name in ["scaling", "standard", "impossibility"] {
            let json: serde_json::Value = serde_json::from_str(
                &std::fs::read_to_string(out.join(format!("{name}.json"))).unwrap(),
            )
            .unwrap();
            // payload bytes only; wall times live in the separate section
            snapshot.insert(
                format!("{name}.json"),
                serde_json::to_string(&json["payload"]).unwrap().into_bytes(),
            );
            for table in ["decay", "fidelity"] {
                let path = out.join(format!("{name}_{table}.csv"));
                snapshot.insert(
                    format!("{name}_{table}.csv"),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
        snapshot
    };

    let first = run_suite();
    let second = run_suite();
    let mut identical = true;
    for (name, bytes) in &first {
        if second.get(name) != Some(bytes) {
            identical = false;
            println!("  mismatch in {name}");
        }
    }

    let elapsed = start.elapsed();
    report(
        "criterion 8 (suite determinism)",
        identical,
        "payload JSON and CSV tables byte-identical across two runs",
        elapsed,
    );
}

// The CLI exit-code contract behind criteria-level runs: 2 on config errors,
// 0 on all-pass.
#[test]
fn cli_exit_codes() {
    let work = tempfile::tempdir().unwrap();
    let bad = work.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"nope\"\n").unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_sbs"))
        .arg("validate")
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let good = work.path().join("good.toml");
    std::fs::write(
        &good,
        format!(
            "experiment = \"impossibility\"\nseed = 3\noutput_path = \"{}/r\"\n\n[dims]\nsystem_dim = 2\nenv_dims = [4]\n\n[hamiltonian]\nfamily = \"conditional\"\n",
            work.path().display()
        ),
    )
    .unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_sbs"))
        .arg("validate")
        .arg(&good)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_sbs"))
        .arg("run")
        .arg(&good)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}
