//! Horizon runner: schedules controller decisions, advances the dynamics,
//! feeds the turning estimator, and samples metrics at every decision epoch.
//!
//! The engine step granularity is `min(decision_interval, cycle)`; the
//! decision interval must divide the cycle or be a multiple of it. Slot
//! controllers therefore run several scaled sub-steps per cycle, while a
//! decision interval above the cycle holds the last allocation across whole
//! cycles. Identical seeds and scenarios produce bit-identical trajectories
//! regardless of the execution strategy.

use crate::dynamics::{
    measure_queues, step, CompiledDemand, EngineError, MeasurementModel, Mode, SimState,
    StepRecord,
};
use crate::exec::{map_indexed, Execution};
use crate::metrics::MetricsSeries;
use crate::network::Network;
use crate::policy::{decide, ControllerConfig, JunctionView, PolicyDecision, TurningEstimator};

#[derive(Debug, Clone)]
pub struct SimulationSpec<'a> {
    pub network: &'a Network,
    pub demand: &'a CompiledDemand,
    pub measurement: MeasurementModel,
    pub mode: Mode,
    pub controller: ControllerConfig,
    /// Seconds between controller decisions.
    pub decision_interval_s: u32,
    pub seed: u64,
    pub execution: Execution,
    /// Initial queue contents; zero when omitted.
    pub initial_queues: Option<&'a [f64]>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub steps: Vec<StepRecord>,
    pub metrics: MetricsSeries,
    pub final_state: SimState,
}

/// Builds the local views and evaluates every junction's controller.
fn decide_all(
    network: &Network,
    config: &ControllerConfig,
    measured: &[f64],
    estimator: &TurningEstimator,
    execution: Execution,
) -> PolicyDecision {
    let budget = network.allocatable();
    let shares = map_indexed(execution, network.num_junctions(), |j| {
        let members = &network.members[j];
        let view = JunctionView {
            phases: &network.phases[j],
            measured: members.iter().map(|&r| measured[r]).collect(),
            downstream: members
                .iter()
                .map(|&r| {
                    network.out_links[r]
                        .iter()
                        .enumerate()
                        .map(|(nth, l)| (estimator.estimate(r, nth), measured[l.dest]))
                        .collect()
                })
                .collect(),
            budget,
        };
        decide(config, &view)
    });
    PolicyDecision { shares }
}

/// Runs the scenario for `horizon_cycles` full traffic cycles.
pub fn run_horizon(spec: &SimulationSpec, horizon_cycles: u32) -> Result<RunOutcome, EngineError> {
    if horizon_cycles == 0 {
        return Err(EngineError::EmptyHorizon);
    }
    let network = spec.network;
    let cycle_s = network.cycle_seconds;
    let interval_s = spec.decision_interval_s;
    if interval_s == 0 || (cycle_s % interval_s != 0 && interval_s % cycle_s != 0) {
        return Err(EngineError::NonIntegralInterval(interval_s, cycle_s));
    }
    let granularity_s = interval_s.min(cycle_s);
    let steps_per_cycle = cycle_s / granularity_s;
    let decide_every = interval_s / granularity_s;
    let scale = granularity_s as f64 / cycle_s as f64;
    let total_steps = horizon_cycles as u64 * steps_per_cycle as u64;

    let mut state = SimState::new(network, spec.seed, spec.mode);
    if let Some(initial) = spec.initial_queues {
        state.seed_queues(initial);
    }
    let mut estimator = TurningEstimator::new(network, spec.controller.estimator_window);
    let mut metrics = MetricsSeries::new(network);
    let mut steps = Vec::with_capacity(total_steps as usize);
    let mut allocation = PolicyDecision {
        shares: network.phases.iter().map(|p| vec![0.0; p.len()]).collect(),
    };

    for s in 0..total_steps {
        if s % decide_every as u64 == 0 {
            let measured = measure_queues(&mut state, &spec.measurement, spec.execution);
            allocation = decide_all(
                network,
                &spec.controller,
                &measured,
                &estimator,
                spec.execution,
            );
            metrics.record_epoch(network, &state, scale);
        }
        let record = step(
            &mut state,
            network,
            spec.demand,
            &allocation,
            scale,
            steps_per_cycle,
            spec.execution,
        );
        for (road, realized) in record.realized_turning.iter().enumerate() {
            if let Some(p_hat) = realized {
                estimator.observe(road, p_hat);
            }
        }
        metrics.account_step(&record);
        steps.push(record);
    }
    metrics.finalize(network, &state, horizon_cycles);
    Ok(RunOutcome {
        steps,
        metrics,
        final_state: state,
    })
}
