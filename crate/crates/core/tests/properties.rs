//! Property and statistical tests: allocation invariants under arbitrary
//! measured queues, codec round-trips, conservation, estimator convergence,
//! and fluid/integer mean-field agreement.

mod common;

use proptest::prelude::*;

use crossflow_core::dynamics::{
    CompiledDemand, DemandProfile, DemandSegment, MeasurementModel, Mode, RoadDemand,
};
use crossflow_core::engine::{run_horizon, SimulationSpec};
use crossflow_core::exec::Execution;
use crossflow_core::metrics::render_csv;
use crossflow_core::network::{
    InRoad, Junction, Network, NetworkTopology, Phase, TurningMatrix,
};
use crossflow_core::policy::{
    allocate_argmax, allocate_cyclic_bp, allocate_proportional, softmax, ControllerConfig,
    PolicyKind, TurningEstimator,
};
use crossflow_core::scenario::{
    generate_grid, generate_two_junction, GridOptions, Scenario, TwoJunctionDemand,
};
use crossflow_core::stability::{brute_force_region, max_epsilon, verify_witness};

use common::{grid_error_scale, random_instance, seeded};

const BUDGET: f64 = 0.9;

proptest! {
    /// Cyclic shares stay on the scaled simplex and strictly positive for
    /// any weights, including the ones produced by negative measurements.
    #[test]
    fn cyclic_allocation_stays_on_simplex(
        weights in prop::collection::vec(-1e3f64..1e3, 2..=6),
        eta in 1e-6f64..50.0,
    ) {
        let shares = allocate_cyclic_bp(&weights, eta, BUDGET);
        let sum: f64 = shares.iter().sum();
        prop_assert!((sum - BUDGET).abs() < 1e-12);
        prop_assert!(shares.iter().all(|&s| s > 0.0));
    }

    /// Argmax policies put the whole budget on exactly one phase.
    #[test]
    fn argmax_allocation_is_a_vertex(
        weights in prop::collection::vec(-1e3f64..1e3, 2..=6),
    ) {
        let shares = allocate_argmax(&weights, BUDGET);
        let full: Vec<usize> = (0..shares.len()).filter(|&i| shares[i] == BUDGET).collect();
        prop_assert_eq!(full.len(), 1);
        prop_assert!(shares.iter().all(|&s| s == 0.0 || s == BUDGET));
    }

    /// Proportional shares are non-negative and sum to the budget.
    #[test]
    fn proportional_allocation_sums_to_budget(
        weights in prop::collection::vec(0.0f64..1e4, 1..=6),
    ) {
        let shares = allocate_proportional(&weights, BUDGET);
        let sum: f64 = shares.iter().sum();
        prop_assert!((sum - BUDGET).abs() < 1e-9);
        prop_assert!(shares.iter().all(|&s| s >= 0.0));
    }

    /// Adding a constant to every weight leaves both backpressure
    /// allocations unchanged (exactly for argmax, to 1e-12 for softmax).
    #[test]
    fn weight_shift_invariance(
        weights in prop::collection::vec(-100.0f64..100.0, 2..=6),
        shift in -1e4f64..1e4,
        eta in 0.01f64..10.0,
    ) {
        let shifted: Vec<f64> = weights.iter().map(|w| w + shift).collect();
        let a = allocate_cyclic_bp(&weights, eta, BUDGET);
        let b = allocate_cyclic_bp(&shifted, eta, BUDGET);
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(allocate_argmax(&weights, BUDGET), allocate_argmax(&shifted, BUDGET));
    }

    /// Raising one weight never lowers its own cyclic share.
    #[test]
    fn cyclic_share_is_monotone_in_own_weight(
        weights in prop::collection::vec(-50.0f64..50.0, 2..=6),
        idx in 0usize..6,
        bump in 0.01f64..20.0,
        eta in 0.01f64..10.0,
    ) {
        let idx = idx % weights.len();
        let before = allocate_cyclic_bp(&weights, eta, BUDGET);
        let mut raised = weights.clone();
        raised[idx] += bump;
        let after = allocate_cyclic_bp(&raised, eta, BUDGET);
        prop_assert!(after[idx] >= before[idx] - 1e-12);
    }

    /// Unscaled softmax satisfies the entropy lower bound
    /// `E[w] >= max w - ln(n)/eta` for every weight vector.
    #[test]
    fn softmax_entropy_bound(
        weights in prop::collection::vec(-100.0f64..100.0, 2..=6),
        eta in 0.05f64..20.0,
    ) {
        let probs = softmax(&weights, eta);
        let expected: f64 = probs.iter().zip(weights.iter()).map(|(p, w)| p * w).sum();
        let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bound = max - (weights.len() as f64).ln() / eta;
        prop_assert!(expected >= bound);
    }

    /// Scenario files round-trip through the TOML codec unchanged.
    #[test]
    fn scenario_codec_round_trip(rows in 2u32..5, cols in 2u32..5, rate in 0.1f64..8.0) {
        let scenario = generate_grid(rows, cols, GridOptions {
            demand_rate: rate,
            ..GridOptions::default()
        }).unwrap();
        let parsed = Scenario::from_toml(&scenario.to_toml()).unwrap();
        prop_assert_eq!(scenario, parsed);
    }
}

fn drain_network(sigma: f64) -> (Network, CompiledDemand) {
    let topo = NetworkTopology {
        junctions: vec![Junction {
            id: "j".into(),
            in_roads: vec!["a".into(), "b".into()],
        }],
        in_roads: vec![
            InRoad {
                id: "a".into(),
                junction: "j".into(),
                capacity: None,
                is_ingress: true,
            },
            InRoad {
                id: "b".into(),
                junction: "j".into(),
                capacity: None,
                is_ingress: true,
            },
        ],
        links: vec![],
        phases: vec![
            Phase {
                junction: "j".into(),
                rates: [("a".to_string(), sigma)].into_iter().collect(),
            },
            Phase {
                junction: "j".into(),
                rates: [("b".to_string(), sigma)].into_iter().collect(),
            },
        ],
        cycle_length_t: 30,
        lost_time_l: 3,
    };
    let network = Network::compile(&topo, &TurningMatrix::default()).unwrap();
    let profile = DemandProfile {
        profiles: vec![
            RoadDemand {
                road: "a".into(),
                segments: vec![DemandSegment {
                    from: 0,
                    to: 1,
                    rate: 2.0,
                }],
                repeat: true,
            },
            RoadDemand {
                road: "b".into(),
                segments: vec![DemandSegment {
                    from: 0,
                    to: 1,
                    rate: 1.5,
                }],
                repeat: true,
            },
        ],
    };
    let demand = CompiledDemand::compile(&profile, &network, u32::MAX).unwrap();
    (network, demand)
}

/// Over 100 integer-mode seeds of a stable draining scenario, the mean
/// trajectory must sit inside the 99% normal confidence band around the
/// fluid trajectory at each of 10 checkpoints. Queues start high enough
/// that service never clips, so the integer dynamics are exactly unbiased.
#[test]
fn mean_field_agreement_across_seeds() {
    let (network, demand) = drain_network(6.0);
    let initial = vec![800.0, 700.0];
    let horizon = 100u32;
    let checkpoints: Vec<usize> = (1..=10).map(|k| (k * 10 - 1) as usize).collect();

    let run = |mode: Mode, seed: u64| {
        let spec = SimulationSpec {
            network: &network,
            demand: &demand,
            measurement: MeasurementModel::default(),
            mode,
            controller: ControllerConfig::default(),
            decision_interval_s: 30,
            seed,
            execution: Execution::Sequential,
            initial_queues: Some(&initial),
        };
        run_horizon(&spec, horizon).unwrap()
    };

    let fluid = run(Mode::Fluid, 0);
    let fluid_totals: Vec<f64> = fluid.metrics.epochs.iter().map(|e| e.total_queue).collect();

    let num_seeds = 100;
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(num_seeds); checkpoints.len()];
    for seed in 0..num_seeds as u64 {
        let out = run(Mode::Integer, seed);
        for (slot, &cp) in checkpoints.iter().enumerate() {
            samples[slot].push(out.metrics.epochs[cp].total_queue);
        }
    }
    for (slot, &cp) in checkpoints.iter().enumerate() {
        let xs = &samples[slot];
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 =
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        let half_width = 2.576 * (var / xs.len() as f64).sqrt();
        let diff = (mean - fluid_totals[cp]).abs();
        assert!(
            diff <= half_width.max(1e-9),
            "checkpoint {cp}: |{mean} - {}| = {diff} > {half_width}",
            fluid_totals[cp]
        );
    }
}

/// Integer-mode service draws never exceed the ceiling of the largest
/// saturation rate (the per-cycle service bound).
#[test]
fn service_realization_respects_bound() {
    let scenario = generate_two_junction(&TwoJunctionDemand::default());
    let (network, demand) = scenario.compile().unwrap();
    let bound_per_road: Vec<f64> = (0..network.num_roads())
        .map(|road| {
            let j = network.road_junction[road];
            let local = network.members[j].iter().position(|&r| r == road).unwrap();
            network.phases[j]
                .iter()
                .map(|p| p[local])
                .fold(0.0f64, f64::max)
                .ceil()
        })
        .collect();
    let spec = SimulationSpec {
        network: &network,
        demand: &demand,
        measurement: MeasurementModel::default(),
        mode: Mode::Integer,
        controller: ControllerConfig::default(),
        decision_interval_s: 30,
        seed: 5,
        execution: Execution::Sequential,
        initial_queues: None,
    };
    let out = run_horizon(&spec, 500).unwrap();
    for record in &out.steps {
        for (road, &s) in record.potential.iter().enumerate() {
            assert!(
                s <= bound_per_road[road],
                "road {road} served {s} above bound {}",
                bound_per_road[road]
            );
        }
    }
}

/// Realized turning proportions averaged over departing cycles converge to
/// the mean turning matrix (3 standard errors at 1e4 cycles).
#[test]
fn realized_turning_matches_mean_proportions() {
    let scenario = generate_two_junction(&TwoJunctionDemand::default());
    let (network, demand) = scenario.compile().unwrap();
    let spec = SimulationSpec {
        network: &network,
        demand: &demand,
        measurement: MeasurementModel::default(),
        mode: Mode::Integer,
        controller: ControllerConfig::default(),
        decision_interval_s: 30,
        seed: 77,
        execution: Execution::Sequential,
        initial_queues: None,
    };
    let out = run_horizon(&spec, 10_000).unwrap();
    for (road, links) in network.out_links.iter().enumerate() {
        for (nth, link) in links.iter().enumerate() {
            let samples: Vec<f64> = out
                .steps
                .iter()
                .filter_map(|r| r.realized_turning[road].as_ref().map(|p| p[nth]))
                .collect();
            assert!(samples.len() > 1000, "road {road} rarely departs");
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let diff = (mean - link.prob).abs();
            assert!(
                diff <= 3.0 * se + 1e-12,
                "link {road}->{}: |{mean} - {}| > 3se = {}",
                link.dest,
                link.prob,
                3.0 * se
            );
        }
    }
}

/// Conservation on random short integer runs: external arrivals equal
/// queued plus exited vehicles exactly.
#[test]
fn integer_conservation_on_random_instances() {
    let mut rng = seeded(402);
    for _ in 0..25 {
        let (network, rates) = random_instance(&mut rng);
        let profile = DemandProfile {
            profiles: network
                .road_ids
                .iter()
                .enumerate()
                .map(|(i, id)| RoadDemand {
                    road: id.clone(),
                    segments: vec![DemandSegment {
                        from: 0,
                        to: 1,
                        rate: rates[i],
                    }],
                    repeat: true,
                })
                .collect(),
        };
        let demand = CompiledDemand::compile(&profile, &network, u32::MAX).unwrap();
        let spec = SimulationSpec {
            network: &network,
            demand: &demand,
            measurement: MeasurementModel { delta_max: 2.0 },
            mode: Mode::Integer,
            controller: ControllerConfig::default(),
            decision_interval_s: 30,
            seed: 9,
            execution: Execution::Sequential,
            initial_queues: None,
        };
        let out = run_horizon(&spec, 50).unwrap();
        let state = out.final_state;
        assert_eq!(
            state.arrivals_total,
            state.queues.iter().sum::<f64>() + state.exits_total
        );
    }
}

/// Accepted turning matrices have convergent Neumann sums: the running
/// term's max-norm falls below 1e-9 well within the iteration cap.
#[test]
fn neumann_series_converges_for_accepted_matrices() {
    let mut rng = seeded(77);
    for _ in 0..25 {
        let (network, _) = random_instance(&mut rng);
        let n = network.num_roads();
        let mut term = vec![1.0f64; n];
        let mut converged = false;
        for _ in 0..10_000 {
            let mut next = vec![0.0; n];
            for (src, links) in network.out_links.iter().enumerate() {
                for l in links {
                    next[l.dest] += term[src] * l.prob;
                }
            }
            term = next;
            if term.iter().fold(0.0f64, |m, x| m.max(x.abs())) < 1e-9 {
                converged = true;
                break;
            }
        }
        assert!(converged, "radius {} did not drain", network.turning_radius);
    }
}

/// LP witnesses satisfy the region constraints by direct substitution, and
/// the grid oracle agrees within its error bound (small version; the full
/// 50-instance run lives in the acceptance suite).
#[test]
fn lp_witness_and_oracle_on_random_instances() {
    let mut rng = seeded(2024);
    for _ in 0..10 {
        let (network, rates) = random_instance(&mut rng);
        let report = max_epsilon(&network, &rates).unwrap();
        assert!(verify_witness(&network, &rates, &report, 1e-7));
        let resolution = 0.05;
        let grid = brute_force_region(&network, &rates, resolution).unwrap();
        let tol = resolution * grid_error_scale(&network) + 1e-7;
        assert!(grid <= report.epsilon_star + 1e-7);
        assert!(
            report.epsilon_star - grid <= tol,
            "lp {} vs grid {} tol {}",
            report.epsilon_star,
            grid,
            tol
        );
    }
}

/// The four policies keep the two-junction scenario's decision cadence:
/// per-cycle controllers decide once per cycle, slot controllers once per
/// slot.
#[test]
fn decision_cadence_matches_policy_family() {
    let mut scenario = generate_two_junction(&TwoJunctionDemand::default());
    scenario.run.horizon_cycles = 12;
    for (policy, expected_epochs) in [
        (PolicyKind::CyclicBp, 12),
        (PolicyKind::Proportional, 12),
        (PolicyKind::ClassicBp, 36),
        (PolicyKind::Greedy, 36),
    ] {
        scenario.controller.policy = policy;
        scenario.controller.decision_interval_s = None;
        let out = scenario.run(Execution::Sequential).unwrap();
        assert_eq!(out.metrics.epochs.len(), expected_epochs, "{policy:?}");
    }
}

/// Byte-identical CSV output for identical seeds, and across execution
/// strategies when the parallel feature is enabled.
#[test]
fn csv_output_is_reproducible() {
    let mut scenario = generate_two_junction(&TwoJunctionDemand::default());
    scenario.run.mode = Mode::Integer;
    scenario.run.horizon_cycles = 400;
    let a = scenario.run(Execution::Sequential).unwrap();
    let b = scenario.run(Execution::Sequential).unwrap();
    assert_eq!(render_csv(&a.metrics).unwrap(), render_csv(&b.metrics).unwrap());
    #[cfg(feature = "parallel")]
    {
        let c = scenario.run(Execution::Parallel).unwrap();
        assert_eq!(render_csv(&a.metrics).unwrap(), render_csv(&c.metrics).unwrap());
    }
}

/// The estimator replayed over step records reproduces the engine's own
/// estimates and converges to the mean turning fractions.
#[test]
fn estimator_replay_converges() {
    let scenario = generate_two_junction(&TwoJunctionDemand::default());
    let (network, demand) = scenario.compile().unwrap();
    let spec = SimulationSpec {
        network: &network,
        demand: &demand,
        measurement: MeasurementModel::default(),
        mode: Mode::Integer,
        controller: ControllerConfig::default(),
        decision_interval_s: 30,
        seed: 31,
        execution: Execution::Sequential,
        initial_queues: None,
    };
    let out = run_horizon(&spec, 3_000).unwrap();
    let mut estimator = TurningEstimator::new(&network, 10);
    for record in &out.steps {
        for (road, realized) in record.realized_turning.iter().enumerate() {
            if let Some(p_hat) = realized {
                estimator.observe(road, p_hat);
            }
        }
    }
    let w1 = network.road_index("w1").unwrap();
    let est = estimator.estimate(w1, 0);
    assert!((est - 0.8).abs() < 0.15, "estimate {est}");
}
