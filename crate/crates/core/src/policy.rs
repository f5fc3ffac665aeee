//! Decentralized signal-control policies and the online turning-fraction
//! estimator.
//!
//! Each controller maps the measured queues of one junction's neighborhood to
//! green-time shares over that junction's phases. The neighborhood view is
//! deliberately narrow: member queues, their direct downstream queues, and
//! the local turning estimates. Nothing else is reachable, which is what
//! makes every policy decentralized by construction.
//!
//! Per-cycle policies (cyclic backpressure, proportional) split the
//! allocatable budget `1 - L/T` across all phases every cycle; per-slot
//! policies (classic backpressure, greedy) give the whole budget of the next
//! slot to a single phase.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::network::Network;

/// Floor applied to exponentiated weights so every phase keeps a strictly
/// positive share even when the exponent underflows.
const EXP_FLOOR: f64 = 1e-300;

/// Green-time shares per junction, aligned with the junction's phase order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub shares: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Softmax-weighted cyclic splits; every phase gets positive green time.
    CyclicBp,
    /// Whole slot to the phase with the largest backpressure weight.
    ClassicBp,
    /// Green time proportional to queue sums per phase.
    Proportional,
    /// Whole slot to the phase with the largest queue sum.
    Greedy,
}

impl PolicyKind {
    /// Per-cycle policies decide once per traffic cycle; the others decide
    /// once per slot.
    pub fn per_cycle(&self) -> bool {
        matches!(self, PolicyKind::CyclicBp | PolicyKind::Proportional)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::CyclicBp => "cyclic_bp",
            PolicyKind::ClassicBp => "classic_bp",
            PolicyKind::Proportional => "proportional",
            PolicyKind::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub kind: PolicyKind,
    /// Softmax sharpness for the cyclic policy.
    pub eta: f64,
    /// Moving-average window of the turning estimator.
    pub estimator_window: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kind: PolicyKind::CyclicBp,
            eta: 2.5,
            estimator_window: 10,
        }
    }
}

/// Everything one junction may look at when deciding: its phases, the
/// measured queues of its members, and per member the (estimate, measured
/// downstream queue) pairs of its out-links.
#[derive(Debug, Clone)]
pub struct JunctionView<'a> {
    pub phases: &'a [Vec<f64>],
    pub measured: Vec<f64>,
    pub downstream: Vec<Vec<(f64, f64)>>,
    /// Allocatable share of the cycle, `1 - L/T`.
    pub budget: f64,
}

/// Backpressure weight per phase: the saturation-weighted difference between
/// each member queue and its estimated downstream queues. Weights may be
/// negative; they are linear in the measured queues.
pub fn compute_weights(view: &JunctionView) -> Vec<f64> {
    let pressure: Vec<f64> = view
        .measured
        .iter()
        .zip(view.downstream.iter())
        .map(|(&q, downs)| {
            let downstream: f64 = downs.iter().map(|&(est, dq)| est * dq).sum();
            q - downstream
        })
        .collect();
    view.phases
        .iter()
        .map(|phase| phase.iter().zip(pressure.iter()).map(|(s, p)| s * p).sum())
        .collect()
}

/// Unscaled softmax of `eta * weights`, stabilized by subtracting the
/// maximum weight; invariant to adding a constant to all weights.
pub fn softmax(weights: &[f64], eta: f64) -> Vec<f64> {
    let max = weights.iter().fold(f64::NEG_INFINITY, |m, &w| m.max(w));
    let exps: Vec<f64> = weights
        .iter()
        .map(|&w| (eta * (w - max)).exp().max(EXP_FLOOR))
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cyclic softmax allocation: softmax of the weights scaled so the shares
/// sum to the budget, keeping every phase strictly positive.
pub fn allocate_cyclic_bp(weights: &[f64], eta: f64, budget: f64) -> Vec<f64> {
    softmax(weights, eta).into_iter().map(|p| p * budget).collect()
}

/// Whole budget to the argmax weight; ties break to the lowest phase index.
pub fn allocate_argmax(weights: &[f64], budget: f64) -> Vec<f64> {
    let mut best = 0usize;
    for (i, &w) in weights.iter().enumerate().skip(1) {
        if w > weights[best] {
            best = i;
        }
    }
    let mut shares = vec![0.0; weights.len()];
    shares[best] = budget;
    shares
}

/// Queue-sum weight per phase: measured member queues (negatives floored at
/// zero) summed over the phase's green members.
pub fn queue_sum_weights(view: &JunctionView) -> Vec<f64> {
    view.phases
        .iter()
        .map(|phase| {
            phase
                .iter()
                .zip(view.measured.iter())
                .filter(|(s, _)| **s > 0.0)
                .map(|(_, &q)| q.max(0.0))
                .sum()
        })
        .collect()
}

/// Shares proportional to the queue-sum weights; uniform when all are zero.
pub fn allocate_proportional(weights: &[f64], budget: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return vec![budget / weights.len() as f64; weights.len()];
    }
    weights.iter().map(|w| budget * w / total).collect()
}

/// Evaluates one junction's controller on its local view.
pub fn decide(config: &ControllerConfig, view: &JunctionView) -> Vec<f64> {
    match config.kind {
        PolicyKind::CyclicBp => {
            allocate_cyclic_bp(&compute_weights(view), config.eta, view.budget)
        }
        PolicyKind::ClassicBp => allocate_argmax(&compute_weights(view), view.budget),
        PolicyKind::Proportional => allocate_proportional(&queue_sum_weights(view), view.budget),
        PolicyKind::Greedy => allocate_argmax(&queue_sum_weights(view), view.budget),
    }
}

struct LinkEstimate {
    window: VecDeque<f64>,
    mean: f64,
}

/// Moving-window estimates of the turning fractions, one ring buffer per
/// link. Cold-start estimate is uniform over a road's out-links plus the
/// implicit exit option; links with no departures carry the last value
/// forward.
pub struct TurningEstimator {
    window: usize,
    roads: Vec<Vec<LinkEstimate>>,
}

impl TurningEstimator {
    pub fn new(network: &Network, window: usize) -> Self {
        let roads = network
            .out_links
            .iter()
            .map(|links| {
                let uniform = 1.0 / (links.len() + 1) as f64;
                links
                    .iter()
                    .map(|_| LinkEstimate {
                        window: VecDeque::with_capacity(window.max(1)),
                        mean: uniform,
                    })
                    .collect()
            })
            .collect();
        TurningEstimator {
            window: window.max(1),
            roads,
        }
    }

    /// Records the realized turning proportions of a road for one step.
    /// Call only for steps where the road had departures.
    pub fn observe(&mut self, road: usize, realized: &[f64]) {
        let links = &mut self.roads[road];
        debug_assert_eq!(links.len(), realized.len());
        for (est, &p) in links.iter_mut().zip(realized.iter()) {
            if est.window.len() == self.window {
                est.window.pop_front();
            }
            est.window.push_back(p);
            est.mean = est.window.iter().sum::<f64>() / est.window.len() as f64;
        }
    }

    /// Current estimate for the road's `nth` out-link.
    pub fn estimate(&self, road: usize, nth: usize) -> f64 {
        self.roads[road][nth].mean
    }
}
