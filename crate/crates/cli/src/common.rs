//! Shared plumbing: error-to-exit-code mapping, override application,
//! output directories, and run manifests.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crossflow_core::dynamics::{EngineError, Mode};
use crossflow_core::policy::PolicyKind;
use crossflow_core::scenario::{Scenario, ScenarioError};

use crate::Overrides;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable files, parse errors: exit 2.
    Config(String),
    /// Scenario fails semantic validation: exit 3.
    Validation(String),
    /// Failures while running or writing artifacts: exit 4.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Validation(m) | CliError::Runtime(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(err: ScenarioError) -> CliError {
        match &err {
            ScenarioError::Parse(_)
            | ScenarioError::SchemaVersion(_)
            | ScenarioError::BadDimensions(_, _)
            | ScenarioError::Io(_) => CliError::Config(err.to_string()),
            ScenarioError::Topology(_) | ScenarioError::Demand(_) => {
                CliError::Validation(err.to_string())
            }
            ScenarioError::Engine(inner) => match inner {
                EngineError::EmptyHorizon | EngineError::NonIntegralInterval(_, _) => {
                    CliError::Config(err.to_string())
                }
                EngineError::Demand(_) => CliError::Validation(err.to_string()),
            },
        }
    }
}

pub fn parse_policy(name: &str) -> Result<PolicyKind, CliError> {
    match name {
        "cyclic_bp" | "cyclic" => Ok(PolicyKind::CyclicBp),
        "classic_bp" | "classic" | "bp" => Ok(PolicyKind::ClassicBp),
        "proportional" => Ok(PolicyKind::Proportional),
        "greedy" => Ok(PolicyKind::Greedy),
        other => Err(CliError::Config(format!("unknown policy `{other}`"))),
    }
}

pub fn parse_mode(name: &str) -> Result<Mode, CliError> {
    match name {
        "fluid" => Ok(Mode::Fluid),
        "integer" => Ok(Mode::Integer),
        other => Err(CliError::Config(format!("unknown mode `{other}`"))),
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::load(path).map_err(CliError::from)
}

/// Applies flag overrides on top of a loaded scenario. `--cycle` rebases
/// the cycle length last so rates stay physically consistent.
pub fn apply_overrides(mut scenario: Scenario, ov: &Overrides) -> Result<Scenario, CliError> {
    if let Some(policy) = &ov.policy {
        scenario.controller.policy = parse_policy(policy)?;
        scenario.controller.decision_interval_s = None;
    }
    if let Some(eta) = ov.eta {
        if eta <= 0.0 {
            return Err(CliError::Config("--eta must be positive".into()));
        }
        scenario.controller.eta = eta;
    }
    if let Some(k) = ov.k {
        if k == 0 {
            return Err(CliError::Config("--k must be at least 1".into()));
        }
        scenario.controller.estimator_window_k = k;
    }
    if let Some(delta) = ov.delta_max {
        if delta < 0.0 {
            return Err(CliError::Config("--delta-max must be non-negative".into()));
        }
        scenario.measurement.delta_max = delta;
    }
    if let Some(h) = ov.horizon {
        scenario.run.horizon_cycles = h;
    }
    if let Some(seed) = ov.seed {
        scenario.run.seed = seed;
    }
    if let Some(mode) = &ov.mode {
        scenario.run.mode = parse_mode(mode)?;
    }
    if let Some(cycle) = ov.cycle {
        if cycle == 0 {
            return Err(CliError::Config("--cycle must be positive".into()));
        }
        scenario = scenario.with_cycle_seconds(cycle);
    }
    if let Some(slot) = ov.slot {
        scenario.controller.decision_interval_s = Some(slot);
    }
    Ok(scenario)
}

/// Output directory resolution: flag, then $CROSSFLOW_OUT_DIR, then a local
/// default.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| std::env::var_os("CROSSFLOW_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("crossflow-out"));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub scenario_path: String,
    pub execution: &'static str,
    pub decision_interval_s: u32,
    pub artifacts: Vec<String>,
    /// Fully resolved scenario; rerunning it reproduces the artifacts.
    pub resolved_scenario: String,
}

pub fn execution_label() -> &'static str {
    #[cfg(feature = "parallel")]
    {
        "parallel"
    }
    #[cfg(not(feature = "parallel"))]
    {
        "sequential"
    }
}

pub fn write_manifest(
    dir: &Path,
    subcommand: &str,
    scenario_path: &Path,
    scenario: &Scenario,
    artifacts: &[String],
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: "crossflow",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        scenario_path: scenario_path.display().to_string(),
        execution: execution_label(),
        decision_interval_s: scenario.decision_interval(),
        artifacts: artifacts.to_vec(),
        resolved_scenario: scenario.to_toml(),
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), body + "\n")
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}
