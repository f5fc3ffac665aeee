use std::path::{Path, PathBuf};

use crossflow_core::exec::{map_indexed, Execution};
use crossflow_core::policy::PolicyKind;
use crossflow_core::scenario::Scenario;

use crate::common::{apply_overrides, load_scenario, parse_policy, resolve_out_dir, write_manifest, CliError};
use crate::Overrides;

const DEFAULT_INTERVALS: [u32; 4] = [30, 60, 90, 120];

/// One sweep cell: the policy with the interval applied the way the policy
/// family interprets it (cycle length for per-cycle, slot for per-slot).
fn cell_scenario(base: &Scenario, policy: PolicyKind, interval: u32) -> Scenario {
    let mut s = base.clone();
    s.controller.policy = policy;
    if policy.per_cycle() {
        s.controller.decision_interval_s = None;
        s = s.with_cycle_seconds(interval);
    } else {
        s.controller.decision_interval_s = Some(interval);
    }
    s
}

struct CellResult {
    policy: PolicyKind,
    interval: u32,
    mean_total_queue: f64,
    mean_congested_links: f64,
    avg_travel_time_cycles: Option<f64>,
}

pub fn run(
    scenario_path: &Path,
    policies: &[String],
    intervals: &[u32],
    overrides: &Overrides,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let base = apply_overrides(load_scenario(scenario_path)?, overrides)?;
    let policies: Vec<PolicyKind> = if policies.is_empty() {
        vec![
            PolicyKind::CyclicBp,
            PolicyKind::ClassicBp,
            PolicyKind::Proportional,
            PolicyKind::Greedy,
        ]
    } else {
        policies
            .iter()
            .map(|p| parse_policy(p))
            .collect::<Result<_, _>>()?
    };
    let intervals: Vec<u32> = if intervals.is_empty() {
        DEFAULT_INTERVALS.to_vec()
    } else {
        intervals.to_vec()
    };
    if intervals.contains(&0) {
        return Err(CliError::Config("intervals must be positive".into()));
    }

    let cells: Vec<(PolicyKind, u32)> = policies
        .iter()
        .flat_map(|&p| intervals.iter().map(move |&i| (p, i)))
        .collect();
    // Validate every cell before running any of them.
    for &(policy, interval) in &cells {
        cell_scenario(&base, policy, interval).compile()?;
    }
    let dir = resolve_out_dir(out)?;

    let results: Vec<Result<CellResult, CliError>> =
        map_indexed(Execution::default(), cells.len(), |idx| {
            let (policy, interval) = cells[idx];
            let scenario = cell_scenario(&base, policy, interval);
            let outcome = scenario.run(Execution::Sequential)?;
            Ok(CellResult {
                policy,
                interval,
                mean_total_queue: outcome.metrics.summary.mean_total_queue,
                mean_congested_links: outcome.metrics.summary.mean_congested_links,
                avg_travel_time_cycles: outcome.metrics.summary.avg_travel_time_cycles,
            })
        });

    let mut csv = String::from(
        "policy,interval_s,mean_q_sigma,mean_congested_links,avg_travel_time_cycles\n",
    );
    println!("policy        interval  mean Q^sigma  congested  travel(cycles)");
    for result in results {
        let cell = result?;
        let travel = cell
            .avg_travel_time_cycles
            .map(|t| format!("{t:.3}"))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            cell.policy.name(),
            cell.interval,
            cell.mean_total_queue,
            cell.mean_congested_links,
            travel
        ));
        println!(
            "{:<13} {:>8} {:>13.2} {:>10.2} {:>15}",
            cell.policy.name(),
            cell.interval,
            cell.mean_total_queue,
            cell.mean_congested_links,
            travel
        );
    }
    std::fs::write(dir.join("sweep.csv"), &csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_manifest(
        &dir,
        "sweep",
        scenario_path,
        &base,
        &["sweep.csv".into(), "manifest.json".into()],
    )?;
    println!("sweep summary written to {}", dir.join("sweep.csv").display());
    Ok(())
}
