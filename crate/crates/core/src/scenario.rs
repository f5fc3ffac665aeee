//! Scenario schema, generators, and the TOML codec.
//!
//! A scenario bundles everything a run needs: topology, turning matrix,
//! demand, measurement model, controller choice, and run parameters
//! (horizon, seed, mode). Files are TOML with explicit top-level sections
//! and a `schema_version`; unknown fields are rejected with positioned
//! errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    CompiledDemand, DemandError, DemandProfile, DemandSegment, EngineError, MeasurementModel,
    Mode, RoadDemand,
};
use crate::engine::{run_horizon, RunOutcome, SimulationSpec};
use crate::exec::Execution;
use crate::network::{
    InRoad, Junction, LinkRef, Network, NetworkTopology, Phase, TopologyError, TurnEntry,
    TurningMatrix,
};
use crate::policy::{ControllerConfig, PolicyKind};

pub const SCHEMA_VERSION: u32 = 1;

fn default_eta() -> f64 {
    2.5
}

fn default_window() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub policy: PolicyKind,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_window")]
    pub estimator_window_k: usize,
    /// Seconds between decisions; defaults to the cycle for per-cycle
    /// policies and to 10s (when it fits the cycle) for slot policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_interval_s: Option<u32>,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        ControllerSpec {
            policy: PolicyKind::CyclicBp,
            eta: default_eta(),
            estimator_window_k: default_window(),
            decision_interval_s: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon_cycles: u32,
    pub seed: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub topology: NetworkTopology,
    pub turning: TurningMatrix,
    pub demand: DemandProfile,
    #[serde(default)]
    pub measurement: MeasurementModel,
    pub controller: ControllerSpec,
    pub run: RunSpec,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("invalid topology: {}", format_list(.0))]
    Topology(Vec<TopologyError>),
    #[error("invalid demand: {}", format_list(.0))]
    Demand(Vec<DemandError>),
    #[error("grid dimensions must be at least 2x2 (got {0}x{1})")]
    BadDimensions(u32, u32),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

fn format_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if scenario.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion(scenario.schema_version));
        }
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Validates the scenario and compiles the network and demand tables.
    pub fn compile(&self) -> Result<(Network, CompiledDemand), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion(self.schema_version));
        }
        let network =
            Network::compile(&self.topology, &self.turning).map_err(ScenarioError::Topology)?;
        let demand = CompiledDemand::compile(&self.demand, &network, self.run.horizon_cycles)
            .map_err(ScenarioError::Demand)?;
        Ok((network, demand))
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            kind: self.controller.policy,
            eta: self.controller.eta,
            estimator_window: self.controller.estimator_window_k,
        }
    }

    /// Effective decision interval in seconds.
    pub fn decision_interval(&self) -> u32 {
        let cycle = self.topology.cycle_length_t;
        self.controller.decision_interval_s.unwrap_or_else(|| {
            if self.controller.policy.per_cycle() || cycle % 10 != 0 {
                cycle
            } else {
                10
            }
        })
    }

    pub fn run(&self, execution: Execution) -> Result<RunOutcome, ScenarioError> {
        self.run_with_initial(execution, None)
    }

    pub fn run_with_initial(
        &self,
        execution: Execution,
        initial_queues: Option<&[f64]>,
    ) -> Result<RunOutcome, ScenarioError> {
        let (network, demand) = self.compile()?;
        let spec = SimulationSpec {
            network: &network,
            demand: &demand,
            measurement: self.measurement,
            mode: self.run.mode,
            controller: self.controller_config(),
            decision_interval_s: self.decision_interval(),
            seed: self.run.seed,
            execution,
            initial_queues,
        };
        Ok(run_horizon(&spec, self.run.horizon_cycles)?)
    }

    /// Rebases the scenario onto a different cycle length, holding physical
    /// rates fixed: saturation and arrival rates scale with the new cycle,
    /// demand segment boundaries and the horizon are re-gridded so their
    /// wall-clock extents are preserved.
    pub fn with_cycle_seconds(mut self, cycle_s: u32) -> Scenario {
        let old = self.topology.cycle_length_t;
        if cycle_s == old || cycle_s == 0 {
            return self;
        }
        let rate_factor = cycle_s as f64 / old as f64;
        for phase in &mut self.topology.phases {
            for rate in phase.rates.values_mut() {
                *rate *= rate_factor;
            }
        }
        self.topology.cycle_length_t = cycle_s;
        let regrid = |cycles: u32| -> u32 {
            ((cycles as f64 / rate_factor).round() as u32).max(1)
        };
        for profile in &mut self.demand.profiles {
            let mut cursor = 0u32;
            for seg in &mut profile.segments {
                seg.rate *= rate_factor;
                let span = regrid(seg.to - seg.from);
                seg.from = cursor;
                cursor += span;
                seg.to = cursor;
            }
        }
        self.run.horizon_cycles = regrid(self.run.horizon_cycles);
        self
    }
}

/// Per-approach demand of the two-junction scenario: `(peak, off_peak)`
/// vehicles per cycle per feeder lane. These defaults are artifact-chosen
/// (heavy north-south at the east junction, peak/off-peak alternating every
/// 600 cycles); they are not taken from any published measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoJunctionDemand {
    /// North and south feeders of the east junction (the double-lane road).
    pub east_ns: (f64, f64),
    /// North and south feeders of the west junction.
    pub west_ns: (f64, f64),
    /// Westbound entry feeding the west junction's eastbound approach.
    pub west_inflow: (f64, f64),
    /// Eastbound entry feeding the east junction's westbound approach.
    pub east_inflow: (f64, f64),
    /// Cycles per demand level before switching; 0 holds the peak forever.
    pub half_period: u32,
}

impl Default for TwoJunctionDemand {
    fn default() -> Self {
        TwoJunctionDemand {
            east_ns: (7.0, 2.8),
            west_ns: (2.5, 1.0),
            west_inflow: (3.0, 1.2),
            east_inflow: (2.0, 0.8),
            half_period: 600,
        }
    }
}

impl TwoJunctionDemand {
    /// Heavily loaded variant: the east junction's north-south movement runs
    /// near saturation, so its signal starves the shared internal link while
    /// the west junction keeps feeding it. The shared link stays congested
    /// and downstream-aware policies pay off; used for policy comparisons.
    pub fn congested() -> Self {
        TwoJunctionDemand {
            east_ns: (12.0, 4.0),
            west_ns: (2.0, 1.0),
            west_inflow: (6.0, 2.0),
            east_inflow: (0.5, 0.2),
            half_period: 0,
        }
    }

    /// Uniformly scales every rate.
    pub fn scaled(mut self, factor: f64) -> Self {
        for pair in [
            &mut self.east_ns,
            &mut self.west_ns,
            &mut self.west_inflow,
            &mut self.east_inflow,
        ] {
            pair.0 *= factor;
            pair.1 *= factor;
        }
        self
    }

    fn segments(&self, rates: (f64, f64)) -> (Vec<DemandSegment>, bool) {
        if self.half_period == 0 {
            (
                vec![DemandSegment {
                    from: 0,
                    to: 1,
                    rate: rates.0,
                }],
                true,
            )
        } else {
            (
                vec![
                    DemandSegment {
                        from: 0,
                        to: self.half_period,
                        rate: rates.0,
                    },
                    DemandSegment {
                        from: self.half_period,
                        to: 2 * self.half_period,
                        rate: rates.1,
                    },
                ],
                true,
            )
        }
    }
}

/// Two signalized junctions on an east-west arterial. Each of the six
/// boundary approaches is a finite in-road fed by two unbounded ingress
/// feeder lanes (12 ingress in-roads in total); the two junctions exchange
/// traffic over the internal eastbound/westbound pair. The north-south road
/// of the east junction is double-laned: saturation 30 and capacity 100
/// against 15/50 elsewhere. Feeder lanes have green in every phase, so
/// their service is policy-independent.
pub fn generate_two_junction(demand: &TwoJunctionDemand) -> Scenario {
    let feeder_sigma = 60.0;
    let mut in_roads = Vec::new();
    let mut links = Vec::new();
    let mut p_bar = Vec::new();

    let approach = |id: &str, junction: &str, capacity: f64| InRoad {
        id: id.into(),
        junction: junction.into(),
        capacity: Some(capacity),
        is_ingress: false,
    };
    // Approaches at the west junction (j1) and east junction (j2). The
    // eastbound internal approach w2 lives at j2, the westbound e1 at j1.
    in_roads.push(approach("n1", "j1", 50.0));
    in_roads.push(approach("s1", "j1", 50.0));
    in_roads.push(approach("w1", "j1", 50.0));
    in_roads.push(approach("e1", "j1", 50.0));
    in_roads.push(approach("n2", "j2", 100.0));
    in_roads.push(approach("s2", "j2", 100.0));
    in_roads.push(approach("e2", "j2", 50.0));
    in_roads.push(approach("w2", "j2", 50.0));

    // Feeder lanes: unbounded ingress queues, two per boundary approach.
    // A feeder must belong to the junction opposite to the approach it
    // feeds, because links join distinct junctions; feeders have green in
    // every phase, so ownership does not affect their service.
    let mut feeders: Vec<(String, &str)> = Vec::new();
    for (target, owner) in [
        ("n1", "j2"),
        ("s1", "j2"),
        ("w1", "j2"),
        ("n2", "j1"),
        ("s2", "j1"),
        ("e2", "j1"),
    ] {
        for lane in ["a", "b"] {
            let id = format!("f_{target}_{lane}");
            in_roads.push(InRoad {
                id: id.clone(),
                junction: owner.into(),
                capacity: None,
                is_ingress: true,
            });
            links.push(LinkRef {
                from: id.clone(),
                to: target.into(),
            });
            p_bar.push(TurnEntry {
                from: id.clone(),
                to: target.into(),
                p: 1.0,
            });
            feeders.push((id, owner));
        }
    }

    // The internal arterial pair.
    links.push(LinkRef {
        from: "w1".into(),
        to: "w2".into(),
    });
    p_bar.push(TurnEntry {
        from: "w1".into(),
        to: "w2".into(),
        p: 0.8,
    });
    links.push(LinkRef {
        from: "e2".into(),
        to: "e1".into(),
    });
    p_bar.push(TurnEntry {
        from: "e2".into(),
        to: "e1".into(),
        p: 0.8,
    });

    let members = |junction: &str, own: &[&str]| -> Vec<String> {
        let mut m: Vec<String> = own.iter().map(|s| s.to_string()).collect();
        m.extend(
            feeders
                .iter()
                .filter(|(_, owner)| *owner == junction)
                .map(|(id, _)| id.clone()),
        );
        m
    };
    let j1_members = members("j1", &["n1", "s1", "w1", "e1"]);
    let j2_members = members("j2", &["n2", "s2", "e2", "w2"]);

    let phase = |junction: &str, rates: &[(&str, f64)], member_list: &[String]| Phase {
        junction: junction.into(),
        rates: rates
            .iter()
            .map(|(id, r)| (id.to_string(), *r))
            .chain(
                member_list
                    .iter()
                    .filter(|id| id.starts_with("f_"))
                    .map(|id| (id.clone(), feeder_sigma)),
            )
            .collect(),
    };

    let topology = NetworkTopology {
        junctions: vec![
            Junction {
                id: "j1".into(),
                in_roads: j1_members.clone(),
            },
            Junction {
                id: "j2".into(),
                in_roads: j2_members.clone(),
            },
        ],
        in_roads,
        links,
        phases: vec![
            phase("j1", &[("n1", 15.0), ("s1", 15.0)], &j1_members),
            phase("j1", &[("w1", 15.0), ("e1", 15.0)], &j1_members),
            phase("j2", &[("n2", 30.0), ("s2", 30.0)], &j2_members),
            phase("j2", &[("w2", 15.0), ("e2", 15.0)], &j2_members),
        ],
        cycle_length_t: 30,
        lost_time_l: 3,
    };

    let mut profiles = Vec::new();
    let mut push_demand = |target: &str, rates: (f64, f64)| {
        let (segments, repeat) = demand.segments(rates);
        for lane in ["a", "b"] {
            profiles.push(RoadDemand {
                road: format!("f_{target}_{lane}"),
                segments: segments.clone(),
                repeat,
            });
        }
    };
    push_demand("n2", demand.east_ns);
    push_demand("s2", demand.east_ns);
    push_demand("n1", demand.west_ns);
    push_demand("s1", demand.west_ns);
    push_demand("w1", demand.west_inflow);
    push_demand("e2", demand.east_inflow);

    Scenario {
        schema_version: SCHEMA_VERSION,
        topology,
        turning: TurningMatrix { p_bar },
        demand: DemandProfile { profiles },
        measurement: MeasurementModel::default(),
        controller: ControllerSpec::default(),
        run: RunSpec {
            horizon_cycles: 2_000,
            seed: 1,
            mode: Mode::Fluid,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    /// Capacity of interior approaches.
    pub capacity: f64,
    /// Saturation rate per approach, vehicles per cycle.
    pub sigma: f64,
    /// Constant demand per boundary ingress approach, vehicles per cycle.
    pub demand_rate: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            capacity: 50.0,
            sigma: 15.0,
            demand_rate: 3.0,
        }
    }
}

const HEADINGS: [char; 4] = ['n', 's', 'e', 'w'];

fn heading_delta(h: char) -> (i64, i64) {
    match h {
        'n' => (-1, 0),
        's' => (1, 0),
        'e' => (0, 1),
        'w' => (0, -1),
        _ => unreachable!(),
    }
}

fn turn_left(h: char) -> char {
    match h {
        'n' => 'w',
        'w' => 's',
        's' => 'e',
        'e' => 'n',
        _ => unreachable!(),
    }
}

fn turn_right(h: char) -> char {
    match h {
        'n' => 'e',
        'e' => 's',
        's' => 'w',
        'w' => 'n',
        _ => unreachable!(),
    }
}

/// Rectangular grid of four-way junctions with bidirectional roads and
/// two-phase (north-south / east-west) tables. Boundary approaches are
/// unbounded ingress roads; interior approaches carry the configured
/// capacity. Turning splits 0.55 through / 0.2 left / 0.15 right, with the
/// remaining 0.1 leaving the network in place; movements without a
/// receiving junction exit.
pub fn generate_grid(
    rows: u32,
    cols: u32,
    opts: GridOptions,
) -> Result<Scenario, ScenarioError> {
    if rows < 2 || cols < 2 {
        return Err(ScenarioError::BadDimensions(rows, cols));
    }
    let junction_id = |r: i64, c: i64| format!("j{r}_{c}");
    let road_id = |h: char, r: i64, c: i64| format!("{h}{r}_{c}");
    let in_grid = |r: i64, c: i64| r >= 0 && c >= 0 && r < rows as i64 && c < cols as i64;

    let mut junctions = Vec::new();
    let mut in_roads = Vec::new();
    let mut links = Vec::new();
    let mut p_bar = Vec::new();
    let mut phases = Vec::new();
    let mut profiles = Vec::new();

    for r in 0..rows as i64 {
        for c in 0..cols as i64 {
            let jid = junction_id(r, c);
            let mut member_list = Vec::new();
            for h in HEADINGS {
                let id = road_id(h, r, c);
                // The approach heading h into (r, c) comes from the
                // neighbor opposite to h; without one it is a boundary
                // ingress.
                let (dr, dc) = heading_delta(h);
                let ingress = !in_grid(r - dr, c - dc);
                in_roads.push(InRoad {
                    id: id.clone(),
                    junction: jid.clone(),
                    capacity: (!ingress).then_some(opts.capacity),
                    is_ingress: ingress,
                });
                if ingress {
                    profiles.push(RoadDemand {
                        road: id.clone(),
                        segments: vec![DemandSegment {
                            from: 0,
                            to: 1,
                            rate: opts.demand_rate,
                        }],
                        repeat: true,
                    });
                }
                member_list.push(id);
            }
            junctions.push(Junction {
                id: jid.clone(),
                in_roads: member_list,
            });
            phases.push(Phase {
                junction: jid.clone(),
                rates: [
                    (road_id('n', r, c), opts.sigma),
                    (road_id('s', r, c), opts.sigma),
                ]
                .into_iter()
                .collect(),
            });
            phases.push(Phase {
                junction: jid.clone(),
                rates: [
                    (road_id('e', r, c), opts.sigma),
                    (road_id('w', r, c), opts.sigma),
                ]
                .into_iter()
                .collect(),
            });
        }
    }

    // Movements: through keeps the heading, turns change it; the served car
    // proceeds to the adjacent junction along its new heading.
    for r in 0..rows as i64 {
        for c in 0..cols as i64 {
            for h in HEADINGS {
                let from = road_id(h, r, c);
                for (new_heading, p) in [
                    (h, 0.55),
                    (turn_left(h), 0.2),
                    (turn_right(h), 0.15),
                ] {
                    let (dr, dc) = heading_delta(new_heading);
                    let (nr, nc) = (r + dr, c + dc);
                    if in_grid(nr, nc) {
                        let to = road_id(new_heading, nr, nc);
                        links.push(LinkRef {
                            from: from.clone(),
                            to: to.clone(),
                        });
                        p_bar.push(TurnEntry {
                            from: from.clone(),
                            to,
                            p,
                        });
                    }
                }
            }
        }
    }

    Ok(Scenario {
        schema_version: SCHEMA_VERSION,
        topology: NetworkTopology {
            junctions,
            in_roads,
            links,
            phases,
            cycle_length_t: 30,
            lost_time_l: 3,
        },
        turning: TurningMatrix { p_bar },
        demand: DemandProfile { profiles },
        measurement: MeasurementModel::default(),
        controller: ControllerSpec::default(),
        run: RunSpec {
            horizon_cycles: 500,
            seed: 1,
            mode: Mode::Fluid,
        },
    })
}
