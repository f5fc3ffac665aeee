// Scratch harness for tuning the two-junction comparison demand. Not part
// of the deliverable; removed before release.

use crossflow_core::exec::Execution;
use crossflow_core::policy::PolicyKind;
use crossflow_core::scenario::{generate_two_junction, TwoJunctionDemand};
use crossflow_core::Mode;

fn mean_q(
    demand: &TwoJunctionDemand,
    policy: PolicyKind,
    mode: Mode,
    seed: u64,
    horizon: u32,
) -> f64 {
    let mut s = generate_two_junction(demand);
    s.controller.policy = policy;
    s.run.mode = mode;
    s.run.seed = seed;
    s.run.horizon_cycles = horizon;
    let out = s.run(Execution::default()).unwrap();
    out.metrics.summary.mean_total_queue
}

fn main() {
    let candidates = [
        ("A", TwoJunctionDemand { east_ns: (12.0, 4.0), west_ns: (2.0, 1.0), west_inflow: (6.0, 2.0), east_inflow: (0.5, 0.2), half_period: 0 }),
        ("B", TwoJunctionDemand { east_ns: (11.0, 4.0), west_ns: (3.0, 1.0), west_inflow: (5.0, 2.0), east_inflow: (1.0, 0.4), half_period: 0 }),
        ("C", TwoJunctionDemand { east_ns: (13.0, 4.0), west_ns: (2.0, 1.0), west_inflow: (7.0, 2.0), east_inflow: (0.5, 0.2), half_period: 0 }),
        ("D", TwoJunctionDemand { east_ns: (12.0, 4.0), west_ns: (4.0, 1.0), west_inflow: (6.0, 2.0), east_inflow: (1.0, 0.2), half_period: 0 }),
        ("E", TwoJunctionDemand { east_ns: (10.0, 4.0), west_ns: (3.0, 1.0), west_inflow: (6.5, 2.0), east_inflow: (1.0, 0.2), half_period: 0 }),
        ("F", TwoJunctionDemand { east_ns: (12.0, 4.8), west_ns: (2.0, 0.8), west_inflow: (6.0, 2.4), east_inflow: (0.5, 0.2), half_period: 300 }),
    ];
    for (name, demand) in &candidates {
        print!("{name}: ");
        for policy in [
            PolicyKind::CyclicBp,
            PolicyKind::Proportional,
            PolicyKind::Greedy,
            PolicyKind::ClassicBp,
        ] {
            let q = mean_q(demand, policy, Mode::Fluid, 1, 3000);
            print!("{}={:.0} ", policy.name(), q);
        }
        println!();
    }
    println!("--- integer mode, 5 seeds, candidate A ---");
    for seed in 1..=5u64 {
        let d = &candidates[0].1;
        let c = mean_q(d, PolicyKind::CyclicBp, Mode::Integer, seed, 3000);
        let p = mean_q(d, PolicyKind::Proportional, Mode::Integer, seed, 3000);
        let g = mean_q(d, PolicyKind::Greedy, Mode::Integer, seed, 3000);
        println!(
            "seed {seed}: cyclic={c:.0} prop={p:.0} greedy={g:.0} ok={}",
            c <= p && c <= g
        );
    }
}
