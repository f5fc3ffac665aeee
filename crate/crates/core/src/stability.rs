//! Stability-region analysis and empirical drift diagnostics.
//!
//! The stability region is the set of arrival-rate vectors for which some
//! green-time shares and departure rates satisfy: accumulated arrivals stay
//! below departures per road, shares fit the allocatable budget per junction,
//! and departures do not exceed allocated service. [`max_epsilon`] maximizes
//! the uniform demand margin over the closed region with a simplex LP and
//! returns the supremum plus an optimal witness; membership in the open
//! region means a strictly positive margin.
//!
//! Two independent cross-checks accompany the LP: [`brute_force_region`]
//! re-derives the margin by enumerating green-time shares on a grid and
//! testing feasibility through the Neumann series of the turning matrix, and
//! [`lemma6_bound`] evaluates a min-max expression that upper-bounds any
//! feasible margin. [`drift_diagnostic`] inspects simulated trajectories for
//! the negative quadratic drift that certifies stability empirically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Network;
use crate::simplex::{LinearProgram, LpError, Relation};

/// Slack used when re-checking a witness against the closed constraints.
pub const WITNESS_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("arrival rates must be non-negative")]
    NegativeRate,
    #[error("rate vector has {0} entries, network has {1} roads")]
    RateCount(usize, usize),
    #[error("grid enumeration supports at most {1} phases, instance has {0}")]
    TooLarge(usize, usize),
    #[error("trajectory must span at least {0} cycles")]
    TrajectoryTooShort(usize),
    #[error("cannot scale an all-zero demand to the region boundary")]
    ZeroDemand,
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Supremum of the uniform demand margin over the closed region.
    pub epsilon_star: f64,
    /// Membership in the open region: `epsilon_star > 0`.
    pub feasible: bool,
    /// Optimal green-time shares per junction and phase.
    pub witness_rho: Vec<Vec<f64>>,
    /// Optimal departure rates per road.
    pub witness_s: Vec<f64>,
    /// Min-max upper bound on any feasible margin.
    pub lemma6_bound: f64,
}

fn check_rates(network: &Network, rates: &[f64]) -> Result<(), StabilityError> {
    if rates.len() != network.num_roads() {
        return Err(StabilityError::RateCount(
            rates.len(),
            network.num_roads(),
        ));
    }
    if rates.iter().any(|&a| a < 0.0 || !a.is_finite()) {
        return Err(StabilityError::NegativeRate);
    }
    Ok(())
}

struct VarLayout {
    rho_base: Vec<usize>,
    total: usize,
    /// Leading variables before `s` (epsilon split or lambda).
    lead: usize,
}

impl VarLayout {
    fn new(network: &Network, lead: usize) -> VarLayout {
        let mut rho_base = Vec::with_capacity(network.num_junctions());
        let mut next = lead + network.num_roads();
        for phases in &network.phases {
            rho_base.push(next);
            next += phases.len();
        }
        VarLayout {
            rho_base,
            total: next,
            lead,
        }
    }

    fn s(&self, road: usize) -> usize {
        self.lead + road
    }

    fn rho(&self, junction: usize, phase: usize) -> usize {
        self.rho_base[junction] + phase
    }
}

/// Adds the shared region constraints: budget per junction and
/// service-dominates-departures per road.
fn add_region_constraints(lp: &mut LinearProgram, network: &Network, layout: &VarLayout) {
    let budget = network.allocatable();
    for j in 0..network.num_junctions() {
        let mut row = vec![0.0; layout.total];
        for p in 0..network.phases[j].len() {
            row[layout.rho(j, p)] = 1.0;
        }
        lp.constrain(row, Relation::Le, budget);
    }
    for (j, members) in network.members.iter().enumerate() {
        for (local, &road) in members.iter().enumerate() {
            let mut row = vec![0.0; layout.total];
            row[layout.s(road)] = 1.0;
            for (p, phase) in network.phases[j].iter().enumerate() {
                row[layout.rho(j, p)] = -phase[local];
            }
            lp.constrain(row, Relation::Le, 0.0);
        }
    }
}

/// Flow-balance rows: `lead_coeff * lead_var - s_i + sum_in p * s_src <= -a_i`.
fn add_flow_constraints(
    lp: &mut LinearProgram,
    network: &Network,
    layout: &VarLayout,
    rates: &[f64],
    lead_cols: &[(usize, f64)],
    rhs_from_rate: impl Fn(f64) -> f64,
) {
    let mut rows: Vec<Vec<f64>> = (0..network.num_roads())
        .map(|i| {
            let mut row = vec![0.0; layout.total];
            for &(col, coeff) in lead_cols {
                row[col] = coeff;
            }
            row[layout.s(i)] = -1.0;
            row
        })
        .collect();
    for (src, links) in network.out_links.iter().enumerate() {
        for l in links {
            rows[l.dest][layout.s(src)] += l.prob;
        }
    }
    for (i, row) in rows.into_iter().enumerate() {
        lp.constrain(row, Relation::Le, rhs_from_rate(rates[i]));
    }
}

/// Maximizes the uniform margin `eps` such that `rates + eps` admits
/// feasible shares and departure rates, and reports the optimum with its
/// witness and the min-max cross-check bound.
pub fn max_epsilon(network: &Network, rates: &[f64]) -> Result<StabilityReport, StabilityError> {
    check_rates(network, rates)?;
    let layout = VarLayout::new(network, 2); // eps+ and eps-
    let mut lp = LinearProgram::new(layout.total);
    lp.objective[0] = 1.0;
    lp.objective[1] = -1.0;
    add_flow_constraints(
        &mut lp,
        network,
        &layout,
        rates,
        &[(0, 1.0), (1, -1.0)],
        |a| -a,
    );
    add_region_constraints(&mut lp, network, &layout);
    let sol = crate::simplex::solve(&lp)?;
    let epsilon_star = sol.x[0] - sol.x[1];
    let witness_s = (0..network.num_roads())
        .map(|i| sol.x[layout.s(i)])
        .collect();
    let witness_rho = (0..network.num_junctions())
        .map(|j| {
            (0..network.phases[j].len())
                .map(|p| sol.x[layout.rho(j, p)])
                .collect()
        })
        .collect();
    Ok(StabilityReport {
        epsilon_star,
        feasible: epsilon_star > 0.0,
        witness_rho,
        witness_s,
        lemma6_bound: lemma6_bound(network, rates)?,
    })
}

/// Largest multiplier `lambda` keeping `lambda * rates` inside the closed
/// region; demand at `0.9 * lambda` has a positive margin, at `1.1 * lambda`
/// a negative one.
pub fn max_scale(network: &Network, rates: &[f64]) -> Result<f64, StabilityError> {
    check_rates(network, rates)?;
    if rates.iter().all(|&a| a == 0.0) {
        return Err(StabilityError::ZeroDemand);
    }
    let layout = VarLayout::new(network, 1); // lambda
    let mut lp = LinearProgram::new(layout.total);
    lp.objective[0] = 1.0;
    // lambda * a_i - s_i + inflow <= 0: fold a_i into the lambda column.
    let mut rows: Vec<Vec<f64>> = (0..network.num_roads())
        .map(|i| {
            let mut row = vec![0.0; layout.total];
            row[0] = rates[i];
            row[layout.s(i)] = -1.0;
            row
        })
        .collect();
    for (src, links) in network.out_links.iter().enumerate() {
        for l in links {
            rows[l.dest][layout.s(src)] += l.prob;
        }
    }
    for row in rows {
        lp.constrain(row, Relation::Le, 0.0);
    }
    add_region_constraints(&mut lp, network, &layout);
    let sol = crate::simplex::solve(&lp)?;
    Ok(sol.x[0])
}

/// Evaluates the min-max upper bound on the margin by the epigraph LP:
/// minimize `sum_j m_j - sum_i a_i u_i` over the probability simplex in `u`
/// with `m_j` dominating every phase weight at `u`; the result is scaled by
/// the allocatable budget.
pub fn lemma6_bound(network: &Network, rates: &[f64]) -> Result<f64, StabilityError> {
    check_rates(network, rates)?;
    let n = network.num_roads();
    let num_j = network.num_junctions();
    // vars: u_0..u_{n-1}, m_0..m_{J-1}; maximize sum a u - sum m.
    let total = n + num_j;
    let mut lp = LinearProgram::new(total);
    for i in 0..n {
        lp.objective[i] = rates[i];
    }
    for j in 0..num_j {
        lp.objective[n + j] = -1.0;
    }
    let mut simplex_row = vec![0.0; total];
    simplex_row[..n].fill(1.0);
    lp.constrain(simplex_row, Relation::Eq, 1.0);
    for (j, members) in network.members.iter().enumerate() {
        for phase in &network.phases[j] {
            let mut row = vec![0.0; total];
            for (local, &road) in members.iter().enumerate() {
                let sigma = phase[local];
                if sigma == 0.0 {
                    continue;
                }
                row[road] += sigma;
                for l in &network.out_links[road] {
                    row[l.dest] -= sigma * l.prob;
                }
            }
            row[n + j] = -1.0;
            lp.constrain(row, Relation::Le, 0.0);
        }
    }
    let sol = crate::simplex::solve(&lp)?;
    Ok(network.allocatable() * -sol.objective)
}

/// Checks a report's witness against the closed region constraints at
/// `epsilon_star - WITNESS_SLACK` by direct substitution.
pub fn verify_witness(
    network: &Network,
    rates: &[f64],
    report: &StabilityReport,
    tol: f64,
) -> bool {
    let eps = report.epsilon_star - WITNESS_SLACK;
    let s = &report.witness_s;
    let budget = network.allocatable();
    let mut inflow = vec![0.0; network.num_roads()];
    for (src, links) in network.out_links.iter().enumerate() {
        for l in links {
            inflow[l.dest] += s[src] * l.prob;
        }
    }
    for i in 0..network.num_roads() {
        if rates[i] + eps + inflow[i] > s[i] + tol {
            return false;
        }
        if s[i] < -tol {
            return false;
        }
    }
    for (j, members) in network.members.iter().enumerate() {
        let shares = &report.witness_rho[j];
        if shares.iter().any(|&r| r < -tol) {
            return false;
        }
        if shares.iter().sum::<f64>() > budget + tol {
            return false;
        }
        let service = network.service_means(j, shares);
        for (local, &road) in members.iter().enumerate() {
            if s[road] > service[local] + tol {
                return false;
            }
        }
    }
    true
}

/// Maximum total phase count accepted by the grid oracle.
pub const BRUTE_FORCE_MAX_PHASES: usize = 6;

/// Independent estimate of the margin: enumerates green-time shares on a
/// simplex grid per junction and tests feasibility via the minimal departure
/// rates `(a + eps)(I - P)^-1` from the Neumann series. The result is within
/// `resolution * sum_j max_phase sum_i sigma_i` of the LP optimum.
pub fn brute_force_region(
    network: &Network,
    rates: &[f64],
    resolution: f64,
) -> Result<f64, StabilityError> {
    check_rates(network, rates)?;
    let total_phases: usize = network.phases.iter().map(|p| p.len()).sum();
    if total_phases > BRUTE_FORCE_MAX_PHASES {
        return Err(StabilityError::TooLarge(
            total_phases,
            BRUTE_FORCE_MAX_PHASES,
        ));
    }
    let base = network.neumann_row(rates, 1e-12);
    let growth = network.neumann_row(&vec![1.0; network.num_roads()], 1e-12);
    let budget = network.allocatable();
    let steps = (budget / resolution + 1e-12).floor() as u32;

    let mut margin = f64::INFINITY;
    for (j, members) in network.members.iter().enumerate() {
        let phases = &network.phases[j];
        let mut best = f64::NEG_INFINITY;
        let mut shares = vec![0u32; phases.len()];
        // DFS over compositions of `steps` across phases; service is
        // monotone in every share, so the optimum sits on the full-budget
        // face.
        enumerate_compositions(&mut shares, 0, steps, &mut |counts| {
            let mut worst = f64::INFINITY;
            for (local, &road) in members.iter().enumerate() {
                let mut service = 0.0;
                for (p, phase) in phases.iter().enumerate() {
                    service += counts[p] as f64 * resolution * phase[local];
                }
                let eps = (service - base[road]) / growth[road];
                worst = worst.min(eps);
            }
            best = best.max(worst);
        });
        margin = margin.min(best);
    }
    Ok(margin)
}

fn enumerate_compositions(shares: &mut [u32], idx: usize, remaining: u32, f: &mut impl FnMut(&[u32])) {
    if idx + 1 == shares.len() {
        shares[idx] = remaining;
        f(shares);
        return;
    }
    for v in 0..=remaining {
        shares[idx] = v;
        enumerate_compositions(shares, idx + 1, remaining - v, f);
    }
}

/// Minimum trajectory length accepted by the drift diagnostic.
pub const DRIFT_MIN_CYCLES: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    /// Mean quadratic increment per quartile of the total queue (ascending).
    pub quartile_mean_increment: [f64; 4],
    /// Mean increment over the top quartile; negative drift at large states
    /// is the empirical stability signature.
    pub top_quartile_mean_increment: f64,
    /// Running time-average of the total queue.
    pub cesaro: Vec<f64>,
}

/// Computes per-cycle Lyapunov increments `(1/2)(|Q(t+1)|^2 - |Q(t)|^2)`,
/// bins them by the total queue at `t`, and reports quartile means plus the
/// Cesaro average series.
pub fn drift_diagnostic(trajectory: &[Vec<f64>]) -> Result<DriftReport, StabilityError> {
    if trajectory.len() < DRIFT_MIN_CYCLES {
        return Err(StabilityError::TrajectoryTooShort(DRIFT_MIN_CYCLES));
    }
    let m = trajectory.len() - 1;
    let mut increments = Vec::with_capacity(m);
    let mut totals = Vec::with_capacity(trajectory.len());
    for t in 0..m {
        let dv: f64 = trajectory[t + 1]
            .iter()
            .zip(trajectory[t].iter())
            .map(|(&next, &cur)| 0.5 * (next * next - cur * cur))
            .sum();
        increments.push(dv);
    }
    for q in trajectory {
        totals.push(q.iter().sum::<f64>());
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        totals[a]
            .partial_cmp(&totals[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut quartiles = [0.0f64; 4];
    for k in 0..4 {
        let lo = k * m / 4;
        let hi = (k + 1) * m / 4;
        let slice = &order[lo..hi.max(lo + 1).min(m)];
        quartiles[k] = slice.iter().map(|&i| increments[i]).sum::<f64>() / slice.len() as f64;
    }

    let mut cesaro = Vec::with_capacity(totals.len());
    let mut acc = 0.0;
    for (t, &q) in totals.iter().enumerate() {
        acc += q;
        cesaro.push(acc / (t + 1) as f64);
    }
    Ok(DriftReport {
        quartile_mean_increment: quartiles,
        top_quartile_mean_increment: quartiles[3],
        cesaro,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        InRoad, Junction, LinkRef, NetworkTopology, Phase, TurnEntry, TurningMatrix,
    };

    /// One junction, one in-road, one phase sigma=4, L/T = 0.1.
    pub(crate) fn single_queue_network() -> Network {
        let topo = NetworkTopology {
            junctions: vec![Junction {
                id: "j".into(),
                in_roads: vec!["r".into()],
            }],
            in_roads: vec![InRoad {
                id: "r".into(),
                junction: "j".into(),
                capacity: None,
                is_ingress: true,
            }],
            links: vec![],
            phases: vec![Phase {
                junction: "j".into(),
                rates: [("r".to_string(), 4.0)].into_iter().collect(),
            }],
            cycle_length_t: 30,
            lost_time_l: 3,
        };
        Network::compile(&topo, &TurningMatrix::default()).unwrap()
    }

    /// J1 with one phase sigma=(4) feeding road 2 with probability 1;
    /// J2 with phases (5,0) and (0,5) on roads 2 and 3; L = 0.
    pub(crate) fn tandem_network() -> Network {
        let topo = NetworkTopology {
            junctions: vec![
                Junction {
                    id: "j1".into(),
                    in_roads: vec!["r1".into()],
                },
                Junction {
                    id: "j2".into(),
                    in_roads: vec!["r2".into(), "r3".into()],
                },
            ],
            in_roads: vec![
                InRoad {
                    id: "r1".into(),
                    junction: "j1".into(),
                    capacity: None,
                    is_ingress: true,
                },
                InRoad {
                    id: "r2".into(),
                    junction: "j2".into(),
                    capacity: None,
                    is_ingress: true,
                },
                InRoad {
                    id: "r3".into(),
                    junction: "j2".into(),
                    capacity: None,
                    is_ingress: true,
                },
            ],
            links: vec![LinkRef {
                from: "r1".into(),
                to: "r2".into(),
            }],
            phases: vec![
                Phase {
                    junction: "j1".into(),
                    rates: [("r1".to_string(), 4.0)].into_iter().collect(),
                },
                Phase {
                    junction: "j2".into(),
                    rates: [("r2".to_string(), 5.0)].into_iter().collect(),
                },
                Phase {
                    junction: "j2".into(),
                    rates: [("r3".to_string(), 5.0)].into_iter().collect(),
                },
            ],
            cycle_length_t: 30,
            lost_time_l: 0,
        };
        let turning = TurningMatrix {
            p_bar: vec![TurnEntry {
                from: "r1".into(),
                to: "r2".into(),
                p: 1.0,
            }],
        };
        Network::compile(&topo, &turning).unwrap()
    }

    #[test]
    fn single_queue_margin_is_26() {
        let net = single_queue_network();
        let report = max_epsilon(&net, &[1.0]).unwrap();
        assert!((report.epsilon_star - 2.6).abs() < 1e-6, "{}", report.epsilon_star);
        assert!(report.feasible);
        assert!(verify_witness(&net, &[1.0], &report, 1e-7));
    }

    #[test]
    fn single_queue_lemma6_bound_is_27() {
        let net = single_queue_network();
        let bound = lemma6_bound(&net, &[1.0]).unwrap();
        assert!((bound - 2.7).abs() < 1e-6, "{bound}");
        let report = max_epsilon(&net, &[1.0]).unwrap();
        assert!(report.epsilon_star < bound);
    }

    #[test]
    fn zero_demand_is_interior() {
        let net = tandem_network();
        let report = max_epsilon(&net, &[0.0, 0.0, 0.0]).unwrap();
        assert!(report.epsilon_star > 0.0);
        assert!(report.lemma6_bound > 0.0);
    }

    #[test]
    fn tandem_margin_is_two_thirds() {
        let net = tandem_network();
        let report = max_epsilon(&net, &[1.0, 0.0, 2.0]).unwrap();
        assert!(
            (report.epsilon_star - 2.0 / 3.0).abs() < 1e-6,
            "{}",
            report.epsilon_star
        );
        assert!(verify_witness(&net, &[1.0, 0.0, 2.0], &report, 1e-7));
        assert!(report.lemma6_bound >= 2.0 / 3.0 - 1e-9);
    }

    #[test]
    fn negative_rates_rejected() {
        let net = single_queue_network();
        assert_eq!(
            max_epsilon(&net, &[-0.5]).unwrap_err(),
            StabilityError::NegativeRate
        );
    }

    #[test]
    fn brute_force_single_queue() {
        let net = single_queue_network();
        let eps = brute_force_region(&net, &[1.0], 0.01).unwrap();
        assert!(eps <= 2.6 + 1e-9);
        assert!(eps >= 2.6 - 0.04, "{eps}");
    }

    #[test]
    fn brute_force_tandem_at_fine_resolution() {
        let net = tandem_network();
        let eps = brute_force_region(&net, &[1.0, 0.0, 2.0], 0.001).unwrap();
        assert!((0.662..=0.667).contains(&eps), "{eps}");
    }

    #[test]
    fn brute_force_infeasible_demand_reports_nonpositive() {
        let net = single_queue_network();
        let eps = brute_force_region(&net, &[10.0], 0.01).unwrap();
        assert!(eps <= 0.0);
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let topo = NetworkTopology {
            junctions: vec![Junction {
                id: "j".into(),
                in_roads: vec!["r".into()],
            }],
            in_roads: vec![InRoad {
                id: "r".into(),
                junction: "j".into(),
                capacity: None,
                is_ingress: true,
            }],
            links: vec![],
            phases: (0..7)
                .map(|_| Phase {
                    junction: "j".into(),
                    rates: [("r".to_string(), 1.0)].into_iter().collect(),
                })
                .collect(),
            cycle_length_t: 30,
            lost_time_l: 0,
        };
        let net = Network::compile(&topo, &TurningMatrix::default()).unwrap();
        assert!(matches!(
            brute_force_region(&net, &[0.1], 0.05),
            Err(StabilityError::TooLarge(7, _))
        ));
    }

    #[test]
    fn max_scale_matches_margin_sign() {
        let net = single_queue_network();
        // capacity 3.6, so the boundary multiplier for unit demand is 3.6
        let lambda = max_scale(&net, &[1.0]).unwrap();
        assert!((lambda - 3.6).abs() < 1e-6, "{lambda}");
        let below = max_epsilon(&net, &[0.9 * lambda]).unwrap();
        assert!(below.epsilon_star > 0.0);
        let above = max_epsilon(&net, &[1.1 * lambda]).unwrap();
        assert!(above.epsilon_star < 0.0);
    }

    #[test]
    fn drift_of_empty_system_is_zero() {
        let trajectory = vec![vec![0.0, 0.0]; 1200];
        let report = drift_diagnostic(&trajectory).unwrap();
        assert_eq!(report.top_quartile_mean_increment, 0.0);
        assert!(report.cesaro.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn short_trajectory_rejected() {
        let trajectory = vec![vec![0.0]; 10];
        assert!(matches!(
            drift_diagnostic(&trajectory),
            Err(StabilityError::TrajectoryTooShort(_))
        ));
    }
}
