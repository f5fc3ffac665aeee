use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crossflow_core::network::Network;
use crossflow_core::scenario::Scenario;
use crossflow_core::stability::{max_epsilon, StabilityReport};

use crate::common::{load_scenario, resolve_out_dir, write_manifest, CliError};

#[derive(Serialize)]
struct SegmentMargin {
    first_cycle: u32,
    epsilon_star: f64,
}

#[derive(Serialize)]
struct StabilityOutput {
    /// Margin of the whole profile: the minimum over demand segments.
    epsilon_star: f64,
    feasible: bool,
    segments: Vec<SegmentMargin>,
    /// Full report of the binding (minimum-margin) segment.
    report: StabilityReport,
}

/// Distinct per-road rate vectors over the horizon, with the first cycle
/// each appears. Rates are piecewise constant, so stepping cycle by cycle
/// and deduplicating is exact.
fn distinct_rate_vectors(scenario: &Scenario, network: &Network) -> Result<Vec<(u32, Vec<f64>)>, CliError> {
    let (_, demand) = scenario.compile()?;
    let horizon = scenario.run.horizon_cycles;
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut vectors = Vec::new();
    for cycle in 0..horizon {
        let rates: Vec<f64> = (0..network.num_roads())
            .map(|road| demand.rate(road, cycle))
            .collect();
        let key: Vec<u64> = rates.iter().map(|r| r.to_bits()).collect();
        if seen.insert(key) {
            vectors.push((cycle, rates));
        }
    }
    Ok(vectors)
}

pub fn run(scenario_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path)?;
    let (network, _) = scenario.compile()?;
    let vectors = distinct_rate_vectors(&scenario, &network)?;

    let mut segments = Vec::new();
    let mut worst: Option<(f64, StabilityReport)> = None;
    for (first_cycle, rates) in &vectors {
        let report =
            max_epsilon(&network, rates).map_err(|e| CliError::Runtime(e.to_string()))?;
        segments.push(SegmentMargin {
            first_cycle: *first_cycle,
            epsilon_star: report.epsilon_star,
        });
        if worst.as_ref().is_none_or(|(eps, _)| report.epsilon_star < *eps) {
            worst = Some((report.epsilon_star, report));
        }
    }
    let (epsilon_star, report) =
        worst.ok_or_else(|| CliError::Validation("scenario has no demand cycles".into()))?;

    let output = StabilityOutput {
        epsilon_star,
        feasible: epsilon_star > 0.0,
        segments,
        report,
    };
    let body = serde_json::to_string_pretty(&output).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{body}");

    let dir = resolve_out_dir(out)?;
    std::fs::write(dir.join("stability.json"), body + "\n")
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_manifest(
        &dir,
        "stability",
        scenario_path,
        &scenario,
        &["stability.json".into(), "manifest.json".into()],
    )?;
    Ok(())
}
