use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sbs_cli::runner::{run_and_write, run_suite, Overrides, RunError};
use sbs_cli::{exit_code, load_config};

/// Deterministic equilibration and objectivity experiments.
#[derive(Parser)]
#[command(name = "sbs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the config seed.
    #[arg(long, global = true, env = "SBS_SEED")]
    seed: Option<u64>,

    /// Override the output base path (a directory for `suite`).
    #[arg(long, global = true, env = "SBS_OUT")]
    out: Option<PathBuf>,

    /// Cap on dense operator dimension.
    #[arg(long, global = true, env = "SBS_MAX_DIM")]
    max_dim: Option<usize>,

    /// Worker threads for the sample loops (0 = all cores).
    #[arg(long, global = true, env = "SBS_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config and write JSON + CSV results.
    Run { config: PathBuf },
    /// Parse and validate a scenario config.
    Validate { config: PathBuf },
    /// Run every *.toml config in a directory and aggregate verdicts.
    Suite { dir: PathBuf },
}

fn main() -> ExitCode {
    // Results must not depend on BLAS thread scheduling; worker parallelism
    // is handled above the kernels.
    sbs_core::qops::set_blas_threads(1);

    let cli = Cli::parse();
    if let Some(max_dim) = cli.max_dim {
        sbs_core::qops::set_max_dim(max_dim);
    }
    if let Some(threads) = cli.threads {
        if threads > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
            {
                eprintln!("cannot configure {threads} threads: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
    };

    let code = match cli.command {
        Command::Validate { config } => match load_config(&config) {
            Ok(parsed) => {
                println!(
                    "ok: {} (experiment = {}, seed = {})",
                    config.display(),
                    parsed.experiment,
                    parsed.seed
                );
                0
            }
            Err(e) => {
                eprintln!("{e}");
                2
            }
        },
        Command::Run { config } => match load_config(&config) {
            Ok(mut parsed) => {
                sbs_cli::runner::apply_overrides(&mut parsed, &overrides);
                let base = PathBuf::from(&parsed.output_path);
                let outcome = run_and_write(&parsed, &base).map(|(record, paths)| {
                    println!("wrote {}", paths.json.display());
                    record
                });
                report_outcome(&config, &outcome)
            }
            Err(e) => {
                eprintln!("{e}");
                2
            }
        },
        Command::Suite { dir } => match run_suite(&dir, &overrides) {
            Ok(entries) => {
                let mut worst = 0u8;
                for entry in &entries {
                    let code = report_outcome(&entry.config_path, &entry.result);
                    worst = worst.max(code);
                }
                println!("suite: {} config(s)", entries.len());
                worst
            }
            Err(e) => {
                eprintln!("{e}");
                3
            }
        },
    };
    ExitCode::from(code)
}

fn report_outcome(
    config_path: &std::path::Path,
    outcome: &Result<sbs_cli::ResultRecord, RunError>,
) -> u8 {
    let code = exit_code(outcome);
    match outcome {
        Ok(record) => {
            let total = record.payload.verdicts.len();
            let passed = record.payload.verdicts.iter().filter(|v| v.pass).count();
            let status = if passed == total { "PASS" } else { "FAIL" };
            println!(
                "{status} {} ({passed}/{total} verdicts)",
                config_path.display()
            );
            for verdict in record.payload.verdicts.iter().filter(|v| !v.pass) {
                println!(
                    "  FAIL {}: value {:e} vs threshold {:e} [{}]",
                    verdict.name, verdict.value, verdict.threshold, verdict.tolerance_ref
                );
            }
        }
        Err(e) => {
            eprintln!("ERROR {}: {e}", config_path.display());
        }
    }
    code
}
