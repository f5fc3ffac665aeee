//! Discrete-time store-and-forward simulation and stability analysis for
//! signalized road networks under decentralized control.
//!
//! The model is a slotted queueing network: each junction serves its member
//! in-roads according to a per-cycle green-time allocation, served vehicles
//! move to downstream in-roads (or exit) by turning proportions, and external
//! demand arrives at ingress in-roads. On top of the simulator the crate
//! provides:
//!
//! * four decentralized signal-control policies (cyclic backpressure with
//!   softmax green splits, classic slot backpressure, proportional, greedy),
//!   plus an online moving-window estimator of turning fractions;
//! * a stability-region analyzer that computes the maximal demand margin via
//!   a small in-house simplex solver, an independent grid-enumeration oracle,
//!   a min-max cross-check bound, and empirical drift diagnostics;
//! * scenario generators (a two-junction arterial and a parametric grid),
//!   a TOML scenario schema, and CSV/JSON/SVG metric emitters.
//!
//! Dynamics come in two flavours: `fluid` (deterministic, real-valued) and
//! `integer` (Poisson arrivals, Bernoulli-rounded service, multinomial
//! turning). Every random draw is tied to a per-in-road seeded stream, so a
//! run is bit-reproducible regardless of how work is scheduled internally.
//!
//! With the default `parallel` feature, per-junction decisions and
//! per-in-road realizations within a cycle run on rayon; disabling the
//! feature compiles a sequential-only engine with identical output.

pub mod dynamics;
pub mod engine;
pub mod exec;
pub mod metrics;
pub mod network;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod simplex;
pub mod stability;
pub mod svg;

pub use dynamics::{DemandProfile, MeasurementModel, Mode, SimState, StepRecord};
pub use engine::{run_horizon, RunOutcome, SimulationSpec};
pub use exec::Execution;
pub use metrics::{congested, EpochMetrics, MetricsSeries, RunSummary};
pub use network::{Network, NetworkTopology, TopologyError, TurningMatrix};
pub use policy::{ControllerConfig, PolicyDecision, PolicyKind, TurningEstimator};
pub use scenario::Scenario;
pub use stability::{DriftReport, StabilityReport};
