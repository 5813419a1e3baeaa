//! Result records: a deterministic JSON payload with wall times kept in a
//! separate section, plus plot-ready CSV emission.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sbs_core::equilibration::EquilibrationReport;

use crate::config::ScenarioConfig;

/// One named check with the value it measured, the threshold it compared
/// against, and the tolerance name that produced the threshold.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub tolerance_ref: String,
}

impl Verdict {
    /// value <= threshold passes.
    pub fn upper(name: impl Into<String>, value: f64, threshold: f64, tolerance_ref: &str) -> Self {
        Self {
            name: name.into(),
            pass: value <= threshold,
            value,
            threshold,
            tolerance_ref: tolerance_ref.to_string(),
        }
    }

    /// value >= threshold passes.
    pub fn lower(name: impl Into<String>, value: f64, threshold: f64, tolerance_ref: &str) -> Self {
        Self {
            name: name.into(),
            pass: value >= threshold,
            value,
            threshold,
            tolerance_ref: tolerance_ref.to_string(),
        }
    }
}

/// One row of the macro-observer decay table. An absent `gamma` marks the
/// infinite-decay sentinel (some per-site overlap sum was zero).
#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub group_size: usize,
    pub pair_i: usize,
    pub pair_j: usize,
    pub fidelity: f64,
    pub gamma: Option<f64>,
    pub bound: f64,
}

/// One flattened fidelity-matrix entry.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityEntry {
    pub observer: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Everything deterministic about a run: echoed config, verdicts, reports,
/// tables, and named scalar measurements.
#[derive(Debug, Clone, Serialize)]
pub struct Payload {
    pub config_echo: ScenarioConfig,
    pub verdicts: Vec<Verdict>,
    pub scalars: BTreeMap<String, f64>,
    pub equilibration_reports: Vec<EquilibrationReport>,
    pub decay_table: Vec<DecayRow>,
    pub fidelity_entries: Vec<FidelityEntry>,
}

impl Payload {
    pub fn new(config: ScenarioConfig) -> Self {
        Self {
            config_echo: config,
            verdicts: Vec::new(),
            scalars: BTreeMap::new(),
            equilibration_reports: Vec::new(),
            decay_table: Vec::new(),
            fidelity_entries: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Wall-clock stage times, isolated from the deterministic payload.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub stages: Vec<StageTime>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub payload: Payload,
    pub timing: Timing,
}

/// Print a float with 17 significant digits so parsing it back is bit-exact.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn write_atomically(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Files produced for one record: `<base>.json`, `<base>_decay.csv`,
/// `<base>_fidelity.csv`.
pub struct OutputPaths {
    pub json: PathBuf,
    pub decay_csv: PathBuf,
    pub fidelity_csv: PathBuf,
}

impl OutputPaths {
    pub fn for_base(base: &Path) -> Self {
        let stem = base.to_string_lossy().to_string();
        Self {
            json: PathBuf::from(format!("{stem}.json")),
            decay_csv: PathBuf::from(format!("{stem}_decay.csv")),
            fidelity_csv: PathBuf::from(format!("{stem}_fidelity.csv")),
        }
    }
}

/// Serialize the record to `<base>.json` (atomic temp-file + rename).
pub fn write_json(record: &ResultRecord, base: &Path) -> std::io::Result<OutputPaths> {
    let paths = OutputPaths::for_base(base);
    let mut text = serde_json::to_string_pretty(record).expect("record serializes");
    text.push('\n');
    write_atomically(&paths.json, &text)?;
    Ok(paths)
}

/// Emit the decay table and flattened fidelity matrices as CSV files next to
/// the JSON record; floats carry 17 significant digits.
pub fn emit_csv(record: &ResultRecord, base: &Path) -> std::io::Result<OutputPaths> {
    let paths = OutputPaths::for_base(base);

    let mut decay = String::from("group_size,pair_i,pair_j,fidelity,gamma,bound\n");
    for row in &record.payload.decay_table {
        let gamma = match row.gamma {
            Some(g) => format_float(g),
            None => "inf".to_string(),
        };
        decay.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.group_size,
            row.pair_i,
            row.pair_j,
            format_float(row.fidelity),
            gamma,
            format_float(row.bound),
        ));
    }
    write_atomically(&paths.decay_csv, &decay)?;

    let mut fid = String::from("observer,i,j,value\n");
    for entry in &record.payload.fidelity_entries {
        fid.push_str(&format!(
            "{},{},{},{}\n",
            entry.observer,
            entry.i,
            entry.j,
            format_float(entry.value),
        ));
    }
    write_atomically(&paths.fidelity_csv, &fid)?;
    Ok(paths)
}
