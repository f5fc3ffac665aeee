use std::path::Path;

use crossflow_core::scenario::{generate_grid, generate_two_junction, GridOptions, TwoJunctionDemand};

use crate::common::CliError;

pub fn run(
    family: &str,
    path: &Path,
    rows: u32,
    cols: u32,
    demand_scale: f64,
) -> Result<(), CliError> {
    if demand_scale <= 0.0 || !demand_scale.is_finite() {
        return Err(CliError::Config("--demand-scale must be positive".into()));
    }
    let scenario = match family {
        "two-junction" | "two_junction" => {
            generate_two_junction(&TwoJunctionDemand::default().scaled(demand_scale))
        }
        "grid" => {
            let opts = GridOptions {
                demand_rate: GridOptions::default().demand_rate * demand_scale,
                ..GridOptions::default()
            };
            generate_grid(rows, cols, opts).map_err(CliError::from)?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown scenario family `{other}` (expected two-junction or grid)"
            )))
        }
    };
    scenario.save(path).map_err(CliError::from)?;
    println!("wrote {} scenario to {}", family, path.display());
    Ok(())
}
