//! Exact queue dynamics: one engine step realizes measurement, service,
//! turning, and arrivals on the cycle-start snapshot.
//!
//! Departures are computed first from the snapshot, then arrivals and
//! inter-junction inflows are added, so vehicles served at one junction reach
//! the downstream queue at the next step boundary. `scale` shrinks a step to
//! a fraction of a cycle for slot-based controllers: saturation rates and
//! arrival rates are both multiplied by it.
//!
//! Fluid mode is deterministic with exact means; integer mode draws Poisson
//! arrivals, Bernoulli-rounded service (exact conditional mean), per-vehicle
//! multinomial turning, and integer-uniform measurement noise.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_items_mut, Execution};
use crate::network::Network;
use crate::policy::PolicyDecision;
use crate::rng::{stream, StreamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fluid,
    Integer,
}

/// Symmetric uniform measurement error, bounded by `delta_max`, independent
/// of the queue state. Measurements are never clamped, so they may be
/// negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementModel {
    pub delta_max: f64,
}

impl Default for MeasurementModel {
    fn default() -> Self {
        MeasurementModel { delta_max: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSegment {
    pub from: u32,
    pub to: u32,
    pub rate: f64,
}

/// Piecewise-constant arrival schedule of one ingress road, in vehicles per
/// cycle. With `repeat`, the segments tile `[0, to_last)` cyclically, which
/// is how peak/off-peak alternation is written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadDemand {
    pub road: String,
    pub segments: Vec<DemandSegment>,
    #[serde(default)]
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandProfile {
    pub profiles: Vec<RoadDemand>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("demand references unknown in-road `{0}`")]
    UnknownRoad(String),
    #[error("demand rate for `{0}` is negative in segment {1}")]
    NegativeRate(String, usize),
    #[error("demand segments for `{0}` must be contiguous and non-overlapping")]
    BadSegments(String),
    #[error("demand for `{0}` does not cover the horizon of {1} cycles")]
    HorizonNotCovered(String, u32),
    #[error("demand targets `{0}`, which is not an ingress in-road")]
    NotIngress(String),
}

/// Demand resolved against a network: per-road segment tables.
#[derive(Debug, Clone)]
pub struct CompiledDemand {
    per_road: Vec<Option<RoadSchedule>>,
}

#[derive(Debug, Clone)]
struct RoadSchedule {
    segments: Vec<DemandSegment>,
    period: Option<u32>,
}

impl CompiledDemand {
    pub fn compile(
        profile: &DemandProfile,
        network: &Network,
        horizon_cycles: u32,
    ) -> Result<CompiledDemand, Vec<DemandError>> {
        let mut errors = Vec::new();
        let mut per_road: Vec<Option<RoadSchedule>> = vec![None; network.num_roads()];
        for spec in &profile.profiles {
            let Some(road) = network.road_index(&spec.road) else {
                errors.push(DemandError::UnknownRoad(spec.road.clone()));
                continue;
            };
            if !network.is_ingress[road] {
                errors.push(DemandError::NotIngress(spec.road.clone()));
            }
            let mut ok = !spec.segments.is_empty();
            let mut cursor = 0u32;
            for (i, seg) in spec.segments.iter().enumerate() {
                if seg.rate < 0.0 || !seg.rate.is_finite() {
                    errors.push(DemandError::NegativeRate(spec.road.clone(), i));
                }
                if seg.from != cursor || seg.to <= seg.from {
                    ok = false;
                }
                cursor = seg.to;
            }
            if !ok {
                errors.push(DemandError::BadSegments(spec.road.clone()));
                continue;
            }
            if !spec.repeat && cursor < horizon_cycles {
                errors.push(DemandError::HorizonNotCovered(
                    spec.road.clone(),
                    horizon_cycles,
                ));
            }
            per_road[road] = Some(RoadSchedule {
                segments: spec.segments.clone(),
                period: spec.repeat.then_some(cursor),
            });
        }
        if errors.is_empty() {
            Ok(CompiledDemand { per_road })
        } else {
            Err(errors)
        }
    }

    /// Mean arrivals (vehicles per cycle) at `road` during `cycle`.
    pub fn rate(&self, road: usize, cycle: u32) -> f64 {
        match &self.per_road[road] {
            None => 0.0,
            Some(schedule) => {
                let t = match schedule.period {
                    Some(p) if p > 0 => cycle % p,
                    _ => cycle,
                };
                schedule
                    .segments
                    .iter()
                    .find(|s| s.from <= t && t < s.to)
                    .map_or(0.0, |s| s.rate)
            }
        }
    }
}

/// Per-road mutable runtime: the four RNG streams plus vehicle tags (entry
/// step of each queued car, integer mode only).
#[derive(Debug)]
pub struct RoadRuntime {
    arrival: ChaCha8Rng,
    service: ChaCha8Rng,
    turning: ChaCha8Rng,
    measurement: ChaCha8Rng,
    tags: VecDeque<u32>,
}

/// Exact simulation state at a step boundary.
#[derive(Debug)]
pub struct SimState {
    pub step: u32,
    pub queues: Vec<f64>,
    pub(crate) roads: Vec<RoadRuntime>,
    pub mode: Mode,
    pub arrivals_total: f64,
    pub exits_total: f64,
    /// Sum of (exit step - entry step) over exited vehicles, integer mode.
    pub travel_steps_total: f64,
    pub travel_count: u64,
}

impl SimState {
    pub fn new(network: &Network, seed: u64, mode: Mode) -> SimState {
        let roads = (0..network.num_roads() as u64)
            .map(|i| RoadRuntime {
                arrival: stream(seed, StreamKind::Arrival, i),
                service: stream(seed, StreamKind::Service, i),
                turning: stream(seed, StreamKind::Turning, i),
                measurement: stream(seed, StreamKind::Measurement, i),
                tags: VecDeque::new(),
            })
            .collect();
        SimState {
            step: 0,
            queues: vec![0.0; network.num_roads()],
            roads,
            mode,
            arrivals_total: 0.0,
            exits_total: 0.0,
            travel_steps_total: 0.0,
            travel_count: 0,
        }
    }

    /// Sets initial queue contents. In integer mode the values must be
    /// integral; the seeded vehicles are tagged with entry step 0 and do not
    /// count as external arrivals.
    pub fn seed_queues(&mut self, queues: &[f64]) {
        assert_eq!(queues.len(), self.queues.len());
        self.queues.copy_from_slice(queues);
        if self.mode == Mode::Integer {
            for (road, &q) in self.roads.iter_mut().zip(queues.iter()) {
                debug_assert_eq!(q.fract(), 0.0);
                road.tags = std::iter::repeat(0u32).take(q as usize).collect();
            }
        }
    }

    pub fn total_queue(&self) -> f64 {
        self.queues.iter().sum()
    }
}

/// Measures all queues: the true value plus a fresh symmetric error drawn
/// from the measurement stream. No clamping.
pub fn measure_queues(
    state: &mut SimState,
    model: &MeasurementModel,
    execution: Execution,
) -> Vec<f64> {
    let mode = state.mode;
    let queues = &state.queues;
    map_items_mut(execution, &mut state.roads, |i, road| {
        queues[i] + draw_measurement_error(&mut road.measurement, model, mode)
    })
}

fn draw_measurement_error(rng: &mut ChaCha8Rng, model: &MeasurementModel, mode: Mode) -> f64 {
    if model.delta_max <= 0.0 {
        return 0.0;
    }
    match mode {
        Mode::Fluid => rng.random_range(-model.delta_max..=model.delta_max),
        Mode::Integer => {
            let bound = model.delta_max.floor() as i64;
            if bound == 0 {
                0.0
            } else {
                rng.random_range(-bound..=bound) as f64
            }
        }
    }
}

/// Potential service per road for one step: exact mean in fluid mode,
/// Bernoulli-rounded mean in integer mode (so the conditional expectation is
/// the mean exactly and the draw never exceeds the next integer).
pub fn realize_service(
    state: &mut SimState,
    network: &Network,
    allocation: &PolicyDecision,
    scale: f64,
    execution: Execution,
) -> Vec<f64> {
    let means = service_means_per_road(network, allocation, scale);
    let mode = state.mode;
    map_items_mut(execution, &mut state.roads, |i, road| match mode {
        Mode::Fluid => means[i],
        Mode::Integer => bernoulli_round(means[i], &mut road.service),
    })
}

fn service_means_per_road(network: &Network, allocation: &PolicyDecision, scale: f64) -> Vec<f64> {
    let mut means = vec![0.0; network.num_roads()];
    for (j, members) in network.members.iter().enumerate() {
        let rates = network.service_means(j, &allocation.shares[j]);
        for (&road, rate) in members.iter().zip(rates) {
            means[road] = rate * scale;
        }
    }
    means
}

fn bernoulli_round(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    let base = mean.floor();
    let frac = mean - base;
    if frac > 1e-12 {
        base + if rng.random::<f64>() < frac { 1.0 } else { 0.0 }
    } else {
        base
    }
}

/// What one step realized, per road: arrivals, potential and actual service,
/// and the realized turning proportions (defined only when a road had
/// departures).
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: u32,
    pub arrivals: Vec<f64>,
    pub potential: Vec<f64>,
    pub departures: Vec<f64>,
    /// Per road, aligned with `Network::out_links[road]`; `None` when the
    /// road had no departures this step.
    pub realized_turning: Vec<Option<Vec<f64>>>,
    pub exits: f64,
}

struct RoadOutcome {
    arrivals: f64,
    potential: f64,
    departed: f64,
    /// Vehicles sent to each out-link, aligned with `out_links[road]`.
    to_links: Vec<f64>,
    exited: f64,
    /// Tags forwarded per out-link (integer mode).
    moved_tags: Vec<Vec<u32>>,
    exited_travel_steps: f64,
    exited_count: u64,
}

/// Advances the state by one step of `scale` cycles under the given
/// allocation. Departures come first from the snapshot, then external
/// arrivals and the inflows routed from upstream departures.
pub fn step(
    state: &mut SimState,
    network: &Network,
    demand: &CompiledDemand,
    allocation: &PolicyDecision,
    scale: f64,
    steps_per_cycle: u32,
    execution: Execution,
) -> StepRecord {
    let mode = state.mode;
    let step_index = state.step;
    let cycle = step_index / steps_per_cycle;
    let means = service_means_per_road(network, allocation, scale);
    let queues = &state.queues;
    let out_links = &network.out_links;
    let exit_prob = &network.exit_prob;

    let outcomes = map_items_mut(execution, &mut state.roads, |i, road| {
        let rate = demand.rate(i, cycle) * scale;
        let arrivals = match mode {
            Mode::Fluid => rate,
            Mode::Integer => draw_poisson(rate, &mut road.arrival),
        };
        let potential = match mode {
            Mode::Fluid => means[i],
            Mode::Integer => bernoulli_round(means[i], &mut road.service),
        };
        let departed = potential.min(queues[i]);
        let links = &out_links[i];
        let mut to_links = vec![0.0; links.len()];
        let mut moved_tags = vec![Vec::new(); links.len()];
        let mut exited = 0.0;
        let mut exited_travel = 0.0;
        let mut exited_count = 0u64;
        match mode {
            Mode::Fluid => {
                for (flow, l) in to_links.iter_mut().zip(links.iter()) {
                    *flow = departed * l.prob;
                }
                exited = departed * exit_prob[i];
            }
            Mode::Integer => {
                for _ in 0..departed as u64 {
                    let tag = road.tags.pop_front().unwrap_or(0);
                    let u: f64 = road.turning.random();
                    let mut acc = 0.0;
                    let mut routed = false;
                    for (k, l) in links.iter().enumerate() {
                        acc += l.prob;
                        if u < acc {
                            to_links[k] += 1.0;
                            moved_tags[k].push(tag);
                            routed = true;
                            break;
                        }
                    }
                    if !routed {
                        exited += 1.0;
                        exited_travel += (step_index + 1 - tag) as f64;
                        exited_count += 1;
                    }
                }
            }
        }
        RoadOutcome {
            arrivals,
            potential,
            departed,
            to_links,
            exited,
            moved_tags,
            exited_travel_steps: exited_travel,
            exited_count,
        }
    });

    // Single-writer merge: apply departures, then route inflows in source
    // index order, then external arrivals.
    let n = network.num_roads();
    let mut record = StepRecord {
        step: step_index,
        arrivals: vec![0.0; n],
        potential: vec![0.0; n],
        departures: vec![0.0; n],
        realized_turning: vec![None; n],
        exits: 0.0,
    };
    for (i, outcome) in outcomes.iter().enumerate() {
        state.queues[i] -= outcome.departed;
        if state.queues[i] < 0.0 {
            state.queues[i] = 0.0; // guard against float dust in fluid mode
        }
        record.arrivals[i] = outcome.arrivals;
        record.potential[i] = outcome.potential;
        record.departures[i] = outcome.departed;
        record.exits += outcome.exited;
        if outcome.departed > 0.0 {
            record.realized_turning[i] = Some(
                outcome
                    .to_links
                    .iter()
                    .map(|&v| v / outcome.departed)
                    .collect(),
            );
        }
    }
    for (i, outcome) in outcomes.iter().enumerate() {
        for (k, link) in network.out_links[i].iter().enumerate() {
            state.queues[link.dest] += outcome.to_links[k];
        }
        if mode == Mode::Integer {
            for (k, link) in network.out_links[i].iter().enumerate() {
                state.roads[link.dest].tags.extend(&outcome.moved_tags[k]);
            }
        }
    }
    for (i, outcome) in outcomes.iter().enumerate() {
        state.queues[i] += outcome.arrivals;
        if mode == Mode::Integer {
            state.roads[i]
                .tags
                .extend(std::iter::repeat(step_index).take(outcome.arrivals as usize));
        }
        state.arrivals_total += outcome.arrivals;
        state.exits_total += outcome.exited;
        state.travel_steps_total += outcome.exited_travel_steps;
        state.travel_count += outcome.exited_count;
    }
    state.step += 1;
    record
}

fn draw_poisson(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("horizon must be at least one cycle")]
    EmptyHorizon,
    #[error("decision interval {0}s and cycle {1}s have no integral ratio")]
    NonIntegralInterval(u32, u32),
    #[error(transparent)]
    Demand(#[from] DemandError),
}
