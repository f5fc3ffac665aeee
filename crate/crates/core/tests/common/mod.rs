//! Shared helpers for the integration suites: seeded random instances for
//! the stability oracles and small canonical networks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crossflow_core::network::{
    InRoad, Junction, LinkRef, Network, NetworkTopology, Phase, TurnEntry, TurningMatrix,
};

/// A random small instance: 1-3 junctions, 1-3 in-roads each, at most 6
/// phases in total, substochastic turning with margin, demands in [0, 2].
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Network, Vec<f64>) {
    loop {
        if let Some(built) = try_random_instance(rng) {
            return built;
        }
    }
}

fn try_random_instance(rng: &mut ChaCha8Rng) -> Option<(Network, Vec<f64>)> {
    let num_junctions: usize = rng.random_range(1..=3);
    let max_phases_per_junction = if num_junctions >= 3 { 2 } else { 3 };

    let mut junctions = Vec::new();
    let mut in_roads = Vec::new();
    let mut phases = Vec::new();
    let mut road_names: Vec<Vec<String>> = Vec::new();
    let mut budget_phases = 6usize;

    for j in 0..num_junctions {
        let jid = format!("j{j}");
        let remaining_junctions = num_junctions - j - 1;
        let max_here = max_phases_per_junction.min(budget_phases - remaining_junctions);
        let num_phases = rng.random_range(1..=max_here.max(1));
        budget_phases -= num_phases;
        let num_roads = rng.random_range(1..=3);
        let names: Vec<String> = (0..num_roads).map(|r| format!("r{j}_{r}")).collect();
        for name in &names {
            in_roads.push(InRoad {
                id: name.clone(),
                junction: jid.clone(),
                capacity: None,
                is_ingress: true,
            });
        }
        for _ in 0..num_phases {
            let mut rates = std::collections::BTreeMap::new();
            for name in &names {
                if rng.random_bool(0.7) {
                    rates.insert(name.clone(), rng.random_range(1.0..8.0f64));
                }
            }
            if rates.is_empty() {
                let pick = &names[rng.random_range(0..names.len())];
                rates.insert(pick.clone(), rng.random_range(1.0..8.0f64));
            }
            phases.push(Phase {
                junction: jid.clone(),
                rates,
            });
        }
        junctions.push(Junction {
            id: jid.clone(),
            in_roads: names.clone(),
        });
        road_names.push(names);
    }

    let mut links = Vec::new();
    let mut p_bar = Vec::new();
    let flat: Vec<(usize, String)> = road_names
        .iter()
        .enumerate()
        .flat_map(|(j, names)| names.iter().map(move |n| (j, n.clone())))
        .collect();
    for (ja, a) in &flat {
        let mut raw = Vec::new();
        for (jb, b) in &flat {
            if ja != jb && rng.random_bool(0.3) {
                raw.push((b.clone(), rng.random_range(0.1..1.0f64)));
            }
        }
        if raw.is_empty() {
            continue;
        }
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        let row_sum = rng.random_range(0.2..0.9f64);
        for (b, w) in raw {
            links.push(LinkRef {
                from: a.clone(),
                to: b.clone(),
            });
            p_bar.push(TurnEntry {
                from: a.clone(),
                to: b.clone(),
                p: w / total * row_sum,
            });
        }
    }

    let topology = NetworkTopology {
        junctions,
        in_roads,
        links,
        phases,
        cycle_length_t: 30,
        lost_time_l: if rng.random_bool(0.5) { 3 } else { 0 },
    };
    let turning = TurningMatrix { p_bar };
    let network = Network::compile(&topology, &turning).ok()?;
    let rates: Vec<f64> = (0..network.num_roads())
        .map(|_| rng.random_range(0.0..2.0f64))
        .collect();
    Some((network, rates))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest per-junction phase service total: `sum_j max_phase sum_i sigma_i`,
/// the scale factor in the grid-oracle error bound.
pub fn grid_error_scale(network: &Network) -> f64 {
    network
        .phases
        .iter()
        .map(|phases| {
            phases
                .iter()
                .map(|p| p.iter().sum::<f64>())
                .fold(0.0f64, f64::max)
        })
        .sum()
}
