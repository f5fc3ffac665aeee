use std::path::{Path, PathBuf};

use crossflow_core::exec::Execution;
use crossflow_core::metrics::MetricsSeries;
use crossflow_core::policy::PolicyKind;
use crossflow_core::svg::render_overlay_chart;

use crate::common::{apply_overrides, load_scenario, resolve_out_dir, write_manifest, CliError};
use crate::Overrides;

/// Growth-ratio threshold for flagging a run as diverging: a linearly
/// growing total queue doubles its Cesaro average between the half run and
/// the full run, a stable one holds it flat.
const DIVERGENCE_RATIO: f64 = 1.4;

struct PolicyRow {
    policy: PolicyKind,
    cesaro: f64,
    slope: f64,
    diverging: bool,
}

fn analyze(series: &MetricsSeries, policy: PolicyKind) -> PolicyRow {
    let totals: Vec<f64> = series.epochs.iter().map(|e| e.total_queue).collect();
    let n = totals.len();
    let half = (n / 2).max(1);
    let cesaro_half = totals[..half].iter().sum::<f64>() / half as f64;
    let cesaro_full = totals.iter().sum::<f64>() / n as f64;
    let t_mid = series.epochs[half - 1].t;
    let t_end = series.epochs[n - 1].t;
    let slope = if t_end > t_mid {
        (totals[n - 1] - totals[half - 1]) / (t_end - t_mid)
    } else {
        0.0
    };
    let diverging = cesaro_half > 0.0 && cesaro_full / cesaro_half >= DIVERGENCE_RATIO && slope > 0.0;
    PolicyRow {
        policy,
        cesaro: cesaro_full,
        slope,
        diverging,
    }
}

pub fn run(scenario_path: &Path, overrides: &Overrides, out: Option<PathBuf>) -> Result<(), CliError> {
    let base = apply_overrides(load_scenario(scenario_path)?, overrides)?;
    base.compile()?;
    let dir = resolve_out_dir(out)?;

    let policies = [
        PolicyKind::CyclicBp,
        PolicyKind::ClassicBp,
        PolicyKind::Proportional,
        PolicyKind::Greedy,
    ];
    let mut rows = Vec::new();
    let mut overlay = Vec::new();
    for policy in policies {
        let mut scenario = base.clone();
        scenario.controller.policy = policy;
        let outcome = scenario.run(Execution::default())?;
        overlay.push((
            policy.name().to_string(),
            outcome
                .metrics
                .epochs
                .iter()
                .map(|e| (e.t, e.total_queue))
                .collect::<Vec<_>>(),
        ));
        rows.push(analyze(&outcome.metrics, policy));
    }
    rows.sort_by(|a, b| a.cesaro.partial_cmp(&b.cesaro).unwrap());

    let mut csv = String::from("rank,policy,cesaro_q_sigma,slope_per_cycle,diverging\n");
    println!("rank  policy        Cesaro Q^sigma  slope/cycle  diverging");
    for (rank, row) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            rank + 1,
            row.policy.name(),
            row.cesaro,
            row.slope,
            row.diverging
        ));
        println!(
            "{:>4}  {:<13} {:>14.2} {:>12.4} {:>10}",
            rank + 1,
            row.policy.name(),
            row.cesaro,
            row.slope,
            row.diverging
        );
    }

    let svg = render_overlay_chart(&overlay, "total queue by policy")
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("compare.svg"), svg).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join("ranking.csv"), &csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_manifest(
        &dir,
        "compare",
        scenario_path,
        &base,
        &[
            "compare.svg".into(),
            "ranking.csv".into(),
            "manifest.json".into(),
        ],
    )?;
    println!("comparison written to {}", dir.display());
    Ok(())
}
