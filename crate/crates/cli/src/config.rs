//! Experiment configuration: a flat TOML file with one table per concern.
//!
//! ```toml
//! experiment = "sbs-scaling"
//! seed = 7
//! output_path = "out/scaling"
//!
//! [dims]
//! system_dim = 2
//! env_dims = [2, 2, 2, 2, 2, 2]
//!
//! [hamiltonian]
//! family = "star"
//!
//! partition_sizes = [1, 2, 3, 4, 5, 6]
//!
//! [tolerances]
//! decay_bound_slack = 1e-9
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// The scenario families the runner knows how to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Conditional-coupling equilibria and the fidelity lower bounds.
    Impossibility,
    /// Product-form coupling: equilibrium carries no correlations.
    StandardModel,
    /// Star coupling: exponential approach to broadcast structure.
    SbsScaling,
    /// Observable and subsystem equilibration bounds.
    EquilibrationBounds,
    /// Assemble the configured Hamiltonian and report diagnostics.
    Custom,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Impossibility => "impossibility",
            Self::StandardModel => "standard-model",
            Self::SbsScaling => "sbs-scaling",
            Self::EquilibrationBounds => "equilibration-bounds",
            Self::Custom => "custom",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianFamily {
    Star,
    Conditional,
    VonNeumann,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub system_dim: usize,
    pub env_dims: Vec<usize>,
}

impl Default for DimsConfig {
    fn default() -> Self {
        Self {
            system_dim: 2,
            env_dims: vec![2, 2, 2],
        }
    }
}

impl DimsConfig {
    pub fn env_dim(&self) -> usize {
        self.env_dims.iter().product()
    }

    pub fn total_dim(&self) -> usize {
        self.system_dim * self.env_dim()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub family: HamiltonianFamily,
    /// Explicit pointer values for the product-form family; drawn from the
    /// seed when empty.
    #[serde(default)]
    pub pointer_values: Vec<f64>,
    /// Explicit star couplings; drawn uniform in [0.5, 1.5] when empty.
    #[serde(default)]
    pub couplings: Vec<f64>,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self {
            family: HamiltonianFamily::Star,
            pointer_values: Vec::new(),
            couplings: Vec::new(),
        }
    }
}

fn default_time_window_multiples() -> Vec<f64> {
    vec![1000.0]
}

fn default_n_time_samples() -> usize {
    4000
}

/// One experiment: everything the runner needs, no implicit randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Base path for results; `<path>.json` plus one CSV per table.
    pub output_path: String,
    #[serde(default)]
    pub dims: DimsConfig,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    /// Averaging windows in units of 1/min_gap.
    #[serde(default = "default_time_window_multiples")]
    pub time_window_multiples: Vec<f64>,
    /// Leading-block macro-observer sizes; defaults to 1..=N.
    #[serde(default)]
    pub partition_sizes: Vec<usize>,
    #[serde(default = "default_n_time_samples")]
    pub n_time_samples: usize,
    /// Named tolerance overrides; unknown names are rejected.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

/// Tolerance names recognized in the `[tolerances]` table, with defaults.
pub const TOLERANCE_DEFAULTS: &[(&str, f64)] = &[
    ("bound_slack", 1e-9),
    ("fidelity_bound_slack", 1e-9),
    ("decay_bound_slack", 1e-9),
    ("monotonicity_slack", 1e-12),
    ("mutual_information_max", 1e-10),
    ("product_distance_max", 1e-10),
    ("product_law_max", 1e-10),
    ("cq_distance_max", 1e-10),
];

impl ScenarioConfig {
    pub fn tolerance(&self, name: &str) -> f64 {
        if let Some(&v) = self.tolerances.get(name) {
            return v;
        }
        TOLERANCE_DEFAULTS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .expect("tolerance name is validated")
    }

    pub fn effective_partition_sizes(&self) -> Vec<usize> {
        if self.partition_sizes.is_empty() {
            (1..=self.dims.env_dims.len()).collect()
        } else {
            self.partition_sizes.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |name: &str, reason: String| ConfigError::Invalid {
            field: name.to_string(),
            reason,
        };
        if self.output_path.is_empty() {
            return Err(field("output_path", "must not be empty".into()));
        }
        if self.dims.system_dim < 2 {
            return Err(field(
                "dims.system_dim",
                format!("must be >= 2, got {}", self.dims.system_dim),
            ));
        }
        if self.dims.env_dims.is_empty() {
            return Err(field("dims.env_dims", "at least one factor required".into()));
        }
        if let Some(&bad) = self.dims.env_dims.iter().find(|&&d| d < 2) {
            return Err(field("dims.env_dims", format!("factors must be >= 2, got {bad}")));
        }
        if self.dims.total_dim() > sbs_core::qops::max_dim() {
            return Err(field(
                "dims",
                format!(
                    "total dimension {} exceeds max_dim {}",
                    self.dims.total_dim(),
                    sbs_core::qops::max_dim()
                ),
            ));
        }
        if self.n_time_samples < 2 {
            return Err(field(
                "n_time_samples",
                format!("must be >= 2, got {}", self.n_time_samples),
            ));
        }
        if let Some(&bad) = self
            .time_window_multiples
            .iter()
            .find(|&&m| !(m.is_finite() && m > 0.0))
        {
            return Err(field(
                "time_window_multiples",
                format!("entries must be positive and finite, got {bad}"),
            ));
        }
        let n = self.dims.env_dims.len();
        if let Some(&bad) = self
            .partition_sizes
            .iter()
            .find(|&&s| s == 0 || s > n)
        {
            return Err(field(
                "partition_sizes",
                format!("sizes must lie in 1..={n}, got {bad}"),
            ));
        }
        for name in self.tolerances.keys() {
            if !TOLERANCE_DEFAULTS.iter().any(|(n, _)| n == name) {
                return Err(field(
                    "tolerances",
                    format!(
                        "unknown tolerance '{name}'; known: {}",
                        TOLERANCE_DEFAULTS
                            .iter()
                            .map(|(n, _)| *n)
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                ));
            }
        }
        if !self.hamiltonian.pointer_values.is_empty()
            && self.hamiltonian.pointer_values.len() != self.dims.system_dim
        {
            return Err(field(
                "hamiltonian.pointer_values",
                format!(
                    "expected {} values, got {}",
                    self.dims.system_dim,
                    self.hamiltonian.pointer_values.len()
                ),
            ));
        }
        if !self.hamiltonian.couplings.is_empty()
            && self.hamiltonian.couplings.len() != self.dims.env_dims.len()
        {
            return Err(field(
                "hamiltonian.couplings",
                format!(
                    "expected {} couplings, got {}",
                    self.dims.env_dims.len(),
                    self.hamiltonian.couplings.len()
                ),
            ));
        }
        let family = self.hamiltonian.family;
        let family_ok = match self.experiment {
            ExperimentKind::Impossibility => family == HamiltonianFamily::Conditional,
            ExperimentKind::StandardModel => family == HamiltonianFamily::VonNeumann,
            ExperimentKind::SbsScaling => family == HamiltonianFamily::Star,
            ExperimentKind::EquilibrationBounds => family == HamiltonianFamily::Explicit,
            ExperimentKind::Custom => true,
        };
        if !family_ok {
            return Err(field(
                "hamiltonian.family",
                format!("family is incompatible with experiment '{}'", self.experiment),
            ));
        }
        Ok(())
    }
}

/// Configuration failures carry the offending file/field so the exit-code-2
/// path stays diagnosable from the message alone.
#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: String,
        source: std::io::Error,
    },
    /// TOML syntax or type error; the inner message carries line/column.
    Parse {
        path: String,
        message: String,
    },
    Invalid {
        field: String,
        reason: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "cannot read config '{path}': {source}"),
            Self::Parse { path, message } => write!(f, "cannot parse config '{path}': {message}"),
            Self::Invalid { field, reason } => write!(f, "invalid config field '{field}': {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Read, parse, and validate a scenario config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: ScenarioConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}
