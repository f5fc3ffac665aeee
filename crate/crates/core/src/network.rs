//! Static road-network description and validation: junctions, in-roads,
//! service phases, inter-junction links, and the mean turning matrix.
//!
//! The serde-facing types ([`NetworkTopology`], [`TurningMatrix`]) use string
//! ids and appear verbatim in scenario files. [`Network::compile`] validates
//! every structural invariant and produces an index-based form used by the
//! engine and the analyzers.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for the spectral-radius power iteration.
const RADIUS_TOL: f64 = 1e-9;
/// Margin below 1 required of the turning-matrix spectral radius.
const RADIUS_MARGIN: f64 = 1e-6;
/// Slack allowed on turning-row sums.
const ROW_SUM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Junction {
    pub id: String,
    /// Ordered member in-roads; phase vectors align with this order.
    pub in_roads: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InRoad {
    pub id: String,
    pub junction: String,
    /// Vehicles the road can hold; omitted means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    #[serde(default)]
    pub is_ingress: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LinkRef {
    pub from: String,
    pub to: String,
}

/// A service phase: saturation rates (vehicles per full cycle) for the
/// member in-roads that have green, zero implied for the rest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub junction: String,
    pub rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetworkTopology {
    pub junctions: Vec<Junction>,
    pub in_roads: Vec<InRoad>,
    pub links: Vec<LinkRef>,
    pub phases: Vec<Phase>,
    /// Common signal period in seconds.
    #[serde(rename = "cycle_length_T")]
    pub cycle_length_t: u32,
    /// Seconds per cycle lost to switching.
    #[serde(rename = "lost_time_L")]
    pub lost_time_l: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TurnEntry {
    pub from: String,
    pub to: String,
    pub p: f64,
}

/// Mean routing proportions over the declared links. Per in-road, the
/// implicit exit probability is one minus the row sum.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct TurningMatrix {
    pub p_bar: Vec<TurnEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("unknown in-road `{0}` referenced by {1}")]
    DanglingReference(String, String),
    #[error("junction `{0}` has no phases")]
    EmptyPhaseSet(String),
    #[error("turning matrix does not drain: spectral radius estimate {0:.9}")]
    NonDraining(f64),
    #[error("bad turning proportion: {0}")]
    BadProportion(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("in-road `{0}` membership does not match its junction field")]
    MembershipMismatch(String),
    #[error("link `{0}`->`{1}` must join in-roads of distinct junctions")]
    SelfJunctionLink(String, String),
    #[error("phase {1} of junction `{0}` has no strictly positive rate")]
    ZeroPhase(String, usize),
    #[error("negative saturation rate for `{1}` in a phase of junction `{0}`")]
    BadSaturation(String, String),
    #[error("in-road `{0}` has non-positive capacity")]
    BadCapacity(String),
    #[error("bad cycle times: T={0}s, L={1}s (need 0 <= L < T, T > 0)")]
    BadCycleTimes(u32, u32),
}

pub type ValidationResult = Result<(), Vec<TopologyError>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown junction `{0}`")]
    UnknownJunction(String),
    #[error("allocation is missing junction index {0}")]
    MissingAllocation(usize),
}

/// One outgoing link of a compiled in-road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutLink {
    pub dest: usize,
    pub prob: f64,
    /// Index into [`Network::links`].
    pub link: usize,
}

/// Validated, index-based network. Immutable after compilation; safe to
/// share read-only across workers.
#[derive(Debug, Clone)]
pub struct Network {
    pub road_ids: Vec<String>,
    pub junction_ids: Vec<String>,
    /// Owning junction index per road.
    pub road_junction: Vec<usize>,
    /// Member road indices per junction, in declaration order.
    pub members: Vec<Vec<usize>>,
    pub capacity: Vec<Option<f64>>,
    pub is_ingress: Vec<bool>,
    /// Per junction: phases as dense saturation vectors aligned with `members`.
    pub phases: Vec<Vec<Vec<f64>>>,
    /// Global link list `(from, to)` in declaration order.
    pub links: Vec<(usize, usize)>,
    pub out_links: Vec<Vec<OutLink>>,
    pub exit_prob: Vec<f64>,
    pub cycle_seconds: u32,
    pub lost_seconds: u32,
    /// Spectral-radius estimate of the turning matrix found at validation.
    pub turning_radius: f64,
}

impl Network {
    pub fn num_roads(&self) -> usize {
        self.road_ids.len()
    }

    pub fn num_junctions(&self) -> usize {
        self.junction_ids.len()
    }

    /// Fraction of the cycle available for green time: `1 - L/T`.
    pub fn allocatable(&self) -> f64 {
        1.0 - self.lost_seconds as f64 / self.cycle_seconds as f64
    }

    pub fn road_index(&self, id: &str) -> Option<usize> {
        self.road_ids.iter().position(|r| r == id)
    }

    pub fn junction_index(&self, id: &str) -> Option<usize> {
        self.junction_ids.iter().position(|j| j == id)
    }

    /// Mean service rate (vehicles per cycle) per member road of a junction,
    /// for given green-time shares: the phase-weighted sum of saturation
    /// rates. Linear in the shares and additive over phases.
    pub fn service_means(&self, junction: usize, shares: &[f64]) -> Vec<f64> {
        let phases = &self.phases[junction];
        let mut rates = vec![0.0; self.members[junction].len()];
        for (phase, &share) in phases.iter().zip(shares.iter()) {
            for (rate, &sat) in rates.iter_mut().zip(phase.iter()) {
                *rate += sat * share;
            }
        }
        rates
    }

    /// Id-keyed variant of [`Network::service_means`] for one junction of a
    /// full [`crate::policy::PolicyDecision`].
    pub fn service_rate(
        &self,
        junction_id: &str,
        decision: &crate::policy::PolicyDecision,
    ) -> Result<BTreeMap<String, f64>, NetworkError> {
        let j = self
            .junction_index(junction_id)
            .ok_or_else(|| NetworkError::UnknownJunction(junction_id.to_string()))?;
        let shares = decision
            .shares
            .get(j)
            .ok_or(NetworkError::MissingAllocation(j))?;
        let rates = self.service_means(j, shares);
        Ok(self.members[j]
            .iter()
            .zip(rates)
            .map(|(&road, rate)| (self.road_ids[road].clone(), rate))
            .collect())
    }

    /// Largest saturation rate over all phases and roads, the per-road
    /// per-cycle service bound.
    pub fn max_saturation(&self) -> f64 {
        self.phases
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |acc, &s| acc.max(s))
    }

    /// Evaluates `v (I - P)^-1` row-vector style via the Neumann series,
    /// where `P` is the mean turning matrix. Terminates when the current
    /// term's max-norm drops below `tol`.
    pub fn neumann_row(&self, v: &[f64], tol: f64) -> Vec<f64> {
        let mut acc = v.to_vec();
        let mut term = v.to_vec();
        for _ in 0..10_000 {
            let mut next = vec![0.0; term.len()];
            for (src, links) in self.out_links.iter().enumerate() {
                if term[src] == 0.0 {
                    continue;
                }
                for l in links {
                    next[l.dest] += term[src] * l.prob;
                }
            }
            let max = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for (a, t) in acc.iter_mut().zip(next.iter()) {
                *a += t;
            }
            term = next;
            if max < tol {
                break;
            }
        }
        acc
    }

    /// Validates and compiles a topology plus turning matrix.
    pub fn compile(
        topology: &NetworkTopology,
        turning: &TurningMatrix,
    ) -> Result<Network, Vec<TopologyError>> {
        let mut errors = Vec::new();

        let mut junction_index = BTreeMap::new();
        for (j, junction) in topology.junctions.iter().enumerate() {
            if junction_index.insert(junction.id.clone(), j).is_some() {
                errors.push(TopologyError::DuplicateId(junction.id.clone()));
            }
        }
        let mut road_index = BTreeMap::new();
        for (i, road) in topology.in_roads.iter().enumerate() {
            if road_index.insert(road.id.clone(), i).is_some() {
                errors.push(TopologyError::DuplicateId(road.id.clone()));
            }
            if !junction_index.contains_key(&road.junction) {
                errors.push(TopologyError::DanglingReference(
                    road.junction.clone(),
                    format!("in-road `{}`", road.id),
                ));
            }
            if let Some(cap) = road.capacity {
                if !(cap > 0.0) {
                    errors.push(TopologyError::BadCapacity(road.id.clone()));
                }
            }
        }

        // Membership must partition the in-roads.
        let mut claimed = BTreeSet::new();
        for junction in &topology.junctions {
            for member in &junction.in_roads {
                match road_index.get(member) {
                    None => errors.push(TopologyError::DanglingReference(
                        member.clone(),
                        format!("junction `{}`", junction.id),
                    )),
                    Some(&i) => {
                        if topology.in_roads[i].junction != junction.id {
                            errors.push(TopologyError::MembershipMismatch(member.clone()));
                        }
                        if !claimed.insert(i) {
                            errors.push(TopologyError::MembershipMismatch(member.clone()));
                        }
                    }
                }
            }
        }
        for (i, road) in topology.in_roads.iter().enumerate() {
            if !claimed.contains(&i) && junction_index.contains_key(&road.junction) {
                errors.push(TopologyError::MembershipMismatch(road.id.clone()));
            }
        }

        if topology.cycle_length_t == 0 || topology.lost_time_l >= topology.cycle_length_t {
            errors.push(TopologyError::BadCycleTimes(
                topology.cycle_length_t,
                topology.lost_time_l,
            ));
        }

        // Links.
        let mut links = Vec::new();
        let mut link_set = BTreeSet::new();
        for link in &topology.links {
            let from = road_index.get(&link.from);
            let to = road_index.get(&link.to);
            match (from, to) {
                (Some(&f), Some(&t)) => {
                    if topology.in_roads[f].junction == topology.in_roads[t].junction {
                        errors.push(TopologyError::SelfJunctionLink(
                            link.from.clone(),
                            link.to.clone(),
                        ));
                    }
                    if !link_set.insert((f, t)) {
                        errors.push(TopologyError::DuplicateId(format!(
                            "link {}->{}",
                            link.from, link.to
                        )));
                    }
                    links.push((f, t));
                }
                _ => {
                    let missing = if from.is_none() { &link.from } else { &link.to };
                    errors.push(TopologyError::DanglingReference(
                        missing.clone(),
                        format!("link {}->{}", link.from, link.to),
                    ));
                }
            }
        }

        // Phases, grouped per junction in declaration order.
        let mut phases: Vec<Vec<Vec<f64>>> = vec![Vec::new(); topology.junctions.len()];
        for phase in &topology.phases {
            let Some(&j) = junction_index.get(&phase.junction) else {
                errors.push(TopologyError::DanglingReference(
                    phase.junction.clone(),
                    "phase".to_string(),
                ));
                continue;
            };
            let junction = &topology.junctions[j];
            let mut dense = vec![0.0; junction.in_roads.len()];
            let mut any_positive = false;
            for (road, &rate) in &phase.rates {
                match junction.in_roads.iter().position(|m| m == road) {
                    None => errors.push(TopologyError::DanglingReference(
                        road.clone(),
                        format!("phase of junction `{}`", phase.junction),
                    )),
                    Some(local) => {
                        if rate < 0.0 {
                            errors.push(TopologyError::BadSaturation(
                                phase.junction.clone(),
                                road.clone(),
                            ));
                        }
                        if rate > 0.0 {
                            any_positive = true;
                        }
                        dense[local] = rate;
                    }
                }
            }
            if !any_positive {
                errors.push(TopologyError::ZeroPhase(
                    phase.junction.clone(),
                    phases[j].len(),
                ));
            }
            phases[j].push(dense);
        }
        for (j, junction) in topology.junctions.iter().enumerate() {
            if phases[j].is_empty() {
                errors.push(TopologyError::EmptyPhaseSet(junction.id.clone()));
            }
        }

        // Turning proportions over declared links.
        let num_roads = topology.in_roads.len();
        let mut turn: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for entry in &turning.p_bar {
            let (Some(&f), Some(&t)) = (road_index.get(&entry.from), road_index.get(&entry.to))
            else {
                errors.push(TopologyError::DanglingReference(
                    format!("{}->{}", entry.from, entry.to),
                    "turning matrix".to_string(),
                ));
                continue;
            };
            if !link_set.contains(&(f, t)) {
                errors.push(TopologyError::BadProportion(format!(
                    "entry {}->{} is not a declared link",
                    entry.from, entry.to
                )));
                continue;
            }
            if !(0.0..=1.0).contains(&entry.p) || !entry.p.is_finite() {
                errors.push(TopologyError::BadProportion(format!(
                    "{}->{} has p = {}",
                    entry.from, entry.to, entry.p
                )));
                continue;
            }
            match turn.entry((f, t)) {
                Entry::Occupied(_) => errors.push(TopologyError::BadProportion(format!(
                    "duplicate entry {}->{}",
                    entry.from, entry.to
                ))),
                Entry::Vacant(slot) => {
                    slot.insert(entry.p);
                }
            }
        }

        let mut out_links: Vec<Vec<OutLink>> = vec![Vec::new(); num_roads];
        for (idx, &(f, t)) in links.iter().enumerate() {
            let prob = turn.get(&(f, t)).copied().unwrap_or(0.0);
            out_links[f].push(OutLink {
                dest: t,
                prob,
                link: idx,
            });
        }
        let mut exit_prob = vec![1.0; num_roads];
        for (road, outs) in out_links.iter().enumerate() {
            let row_sum: f64 = outs.iter().map(|l| l.prob).sum();
            if row_sum > 1.0 + ROW_SUM_SLACK {
                errors.push(TopologyError::BadProportion(format!(
                    "row sum {} for in-road `{}`",
                    row_sum, topology.in_roads[road].id
                )));
            }
            exit_prob[road] = (1.0 - row_sum).max(0.0);
        }

        let radius = spectral_radius(num_roads, &out_links);
        if radius >= 1.0 - RADIUS_MARGIN {
            errors.push(TopologyError::NonDraining(radius));
        }

        if !errors.is_empty() {
            return Err(errors);
        }

        Ok(Network {
            road_ids: topology.in_roads.iter().map(|r| r.id.clone()).collect(),
            junction_ids: topology.junctions.iter().map(|j| j.id.clone()).collect(),
            road_junction: topology
                .in_roads
                .iter()
                .map(|r| junction_index[&r.junction])
                .collect(),
            members: topology
                .junctions
                .iter()
                .map(|j| j.in_roads.iter().map(|m| road_index[m]).collect())
                .collect(),
            capacity: topology.in_roads.iter().map(|r| r.capacity).collect(),
            is_ingress: topology.in_roads.iter().map(|r| r.is_ingress).collect(),
            phases,
            links,
            out_links,
            exit_prob,
            cycle_seconds: topology.cycle_length_t,
            lost_seconds: topology.lost_time_l,
            turning_radius: radius,
        })
    }
}

/// Full-list validation per the type invariants. Success means
/// [`Network::compile`] succeeds on the same inputs.
pub fn validate_topology(topology: &NetworkTopology, turning: &TurningMatrix) -> ValidationResult {
    Network::compile(topology, turning).map(|_| ())
}

/// Power-iteration estimate of the spectral radius of the (non-negative)
/// turning matrix. Iterates on `P + I` so periodic structures such as pure
/// permutations still converge; the radius of `P` is the estimate minus one.
fn spectral_radius(num_roads: usize, out_links: &[Vec<OutLink>]) -> f64 {
    if num_roads == 0 || out_links.iter().all(|l| l.is_empty()) {
        return 0.0;
    }
    let mut x = vec![1.0 / num_roads as f64; num_roads];
    let mut ratio_prev = f64::NAN;
    for _ in 0..10_000 {
        let mut next = x.clone(); // the +I term
        for (src, links) in out_links.iter().enumerate() {
            for l in links {
                next[l.dest] += x[src] * l.prob;
            }
        }
        let norm: f64 = next.iter().sum();
        if norm == 0.0 {
            return 0.0;
        }
        let ratio = norm; // x was normalized to sum 1
        for v in next.iter_mut() {
            *v /= norm;
        }
        x = next;
        if (ratio - ratio_prev).abs() <= RADIUS_TOL * ratio.max(1.0) {
            return ratio - 1.0;
        }
        ratio_prev = ratio;
    }
    ratio_prev - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_road_topology(with_phase_for_both: bool) -> NetworkTopology {
        NetworkTopology {
            junctions: vec![
                Junction {
                    id: "a".into(),
                    in_roads: vec!["r1".into()],
                },
                Junction {
                    id: "b".into(),
                    in_roads: vec!["r2".into()],
                },
            ],
            in_roads: vec![
                InRoad {
                    id: "r1".into(),
                    junction: "a".into(),
                    capacity: None,
                    is_ingress: true,
                },
                InRoad {
                    id: "r2".into(),
                    junction: "b".into(),
                    capacity: Some(50.0),
                    is_ingress: false,
                },
            ],
            links: vec![
                LinkRef {
                    from: "r1".into(),
                    to: "r2".into(),
                },
                LinkRef {
                    from: "r2".into(),
                    to: "r1".into(),
                },
            ],
            phases: if with_phase_for_both {
                vec![
                    Phase {
                        junction: "a".into(),
                        rates: [("r1".to_string(), 4.0)].into_iter().collect(),
                    },
                    Phase {
                        junction: "b".into(),
                        rates: [("r2".to_string(), 4.0)].into_iter().collect(),
                    },
                ]
            } else {
                vec![Phase {
                    junction: "a".into(),
                    rates: [("r1".to_string(), 4.0)].into_iter().collect(),
                }]
            },
            cycle_length_t: 30,
            lost_time_l: 3,
        }
    }

    fn turning(p12: f64, p21: f64) -> TurningMatrix {
        TurningMatrix {
            p_bar: vec![
                TurnEntry {
                    from: "r1".into(),
                    to: "r2".into(),
                    p: p12,
                },
                TurnEntry {
                    from: "r2".into(),
                    to: "r1".into(),
                    p: p21,
                },
            ],
        }
    }

    #[test]
    fn zero_turning_matrix_validates() {
        let topo = two_road_topology(true);
        assert!(validate_topology(&topo, &TurningMatrix::default()).is_ok());
        let net = Network::compile(&topo, &TurningMatrix::default()).unwrap();
        assert_eq!(net.turning_radius, 0.0);
        assert_eq!(net.exit_prob, vec![1.0, 1.0]);
    }

    #[test]
    fn permutation_turning_is_non_draining() {
        let topo = two_road_topology(true);
        let err = validate_topology(&topo, &turning(1.0, 1.0)).unwrap_err();
        assert!(err
            .iter()
            .any(|e| matches!(e, TopologyError::NonDraining(r) if *r > 1.0 - 1e-6)));
    }

    #[test]
    fn half_half_turning_has_radius_half() {
        let topo = two_road_topology(true);
        let net = Network::compile(&topo, &turning(0.5, 0.5)).unwrap();
        assert!((net.turning_radius - 0.5).abs() < 1e-6);
    }

    #[test]
    fn nilpotent_chain_has_radius_zero() {
        let topo = two_road_topology(true);
        let t = TurningMatrix {
            p_bar: vec![TurnEntry {
                from: "r1".into(),
                to: "r2".into(),
                p: 1.0,
            }],
        };
        let net = Network::compile(&topo, &t).unwrap();
        assert!(net.turning_radius < 1e-3);
        assert_eq!(net.exit_prob[0], 0.0);
        assert_eq!(net.exit_prob[1], 1.0);
    }

    #[test]
    fn missing_phase_set_reported() {
        let topo = two_road_topology(false);
        let err = validate_topology(&topo, &TurningMatrix::default()).unwrap_err();
        assert!(err
            .iter()
            .any(|e| matches!(e, TopologyError::EmptyPhaseSet(j) if j == "b")));
    }

    #[test]
    fn dangling_and_bad_proportion_collected_together() {
        let mut topo = two_road_topology(true);
        topo.links.push(LinkRef {
            from: "r1".into(),
            to: "ghost".into(),
        });
        let t = turning(1.5, 0.2);
        let err = validate_topology(&topo, &t).unwrap_err();
        assert!(err
            .iter()
            .any(|e| matches!(e, TopologyError::DanglingReference(id, _) if id == "ghost")));
        assert!(err
            .iter()
            .any(|e| matches!(e, TopologyError::BadProportion(_))));
    }

    #[test]
    fn row_sum_above_one_rejected() {
        let mut topo = two_road_topology(true);
        topo.junctions.push(Junction {
            id: "c".into(),
            in_roads: vec!["r3".into()],
        });
        topo.in_roads.push(InRoad {
            id: "r3".into(),
            junction: "c".into(),
            capacity: None,
            is_ingress: false,
        });
        topo.phases.push(Phase {
            junction: "c".into(),
            rates: [("r3".to_string(), 2.0)].into_iter().collect(),
        });
        topo.links.push(LinkRef {
            from: "r1".into(),
            to: "r3".into(),
        });
        let t = TurningMatrix {
            p_bar: vec![
                TurnEntry {
                    from: "r1".into(),
                    to: "r2".into(),
                    p: 0.7,
                },
                TurnEntry {
                    from: "r1".into(),
                    to: "r3".into(),
                    p: 0.7,
                },
            ],
        };
        let err = validate_topology(&topo, &t).unwrap_err();
        assert!(err
            .iter()
            .any(|e| matches!(e, TopologyError::BadProportion(m) if m.contains("row sum"))));
    }

    #[test]
    fn bad_cycle_times_rejected() {
        let mut topo = two_road_topology(true);
        topo.lost_time_l = 30;
        let err = validate_topology(&topo, &TurningMatrix::default()).unwrap_err();
        assert!(err
            .iter()
            .any(|e| matches!(e, TopologyError::BadCycleTimes(30, 30))));
    }

    #[test]
    fn neumann_row_on_chain() {
        let topo = two_road_topology(true);
        let net = Network::compile(&topo, &turning(0.5, 0.0)).unwrap();
        // v (I - P)^-1 with P = [[0, .5], [0, 0]]: (1, 0) -> (1, 0.5)
        let m = net.neumann_row(&[1.0, 0.0], 1e-12);
        assert!((m[0] - 1.0).abs() < 1e-9);
        assert!((m[1] - 0.5).abs() < 1e-9);
    }
}
