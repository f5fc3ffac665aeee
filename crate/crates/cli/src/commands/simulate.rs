use std::path::{Path, PathBuf};

use crossflow_core::exec::Execution;
use crossflow_core::metrics::{write_metrics, MetricsFormat};
use crossflow_core::svg::render_svg;

use crate::common::{apply_overrides, load_scenario, resolve_out_dir, write_manifest, CliError};
use crate::Overrides;

pub fn run(scenario_path: &Path, overrides: &Overrides, out: Option<PathBuf>) -> Result<(), CliError> {
    let scenario = apply_overrides(load_scenario(scenario_path)?, overrides)?;
    let dir = resolve_out_dir(out)?;
    let outcome = scenario.run(Execution::default())?;

    let title = format!(
        "{} on {}",
        scenario.controller.policy.name(),
        scenario_path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario")
    );
    write_metrics(&outcome.metrics, &dir.join("metrics.csv"), MetricsFormat::Csv)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_metrics(&outcome.metrics, &dir.join("metrics.json"), MetricsFormat::Json)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    render_svg(&outcome.metrics, &dir.join("run.svg"), &title)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_manifest(
        &dir,
        "simulate",
        scenario_path,
        &scenario,
        &[
            "metrics.csv".into(),
            "metrics.json".into(),
            "run.svg".into(),
            "manifest.json".into(),
        ],
    )?;

    let summary = &outcome.metrics.summary;
    println!(
        "simulate: {} cycles, mean total queue {:.2}, mean congested links {:.2}, exits {:.0}",
        scenario.run.horizon_cycles,
        summary.mean_total_queue,
        summary.mean_congested_links,
        summary.total_exits
    );
    println!("artifacts written to {}", dir.display());
    Ok(())
}
