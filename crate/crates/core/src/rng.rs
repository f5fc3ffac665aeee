//! Per-entity random streams.
//!
//! Every in-road owns four independently seeded ChaCha8 streams (arrivals,
//! service rounding, turning, measurement). Stream seeds are derived from the
//! master scenario seed with a SplitMix64 mix, so draws depend only on the
//! (road, purpose) pair and the state history, never on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Arrival = 1,
    Service = 2,
    Turning = 3,
    Measurement = 4,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, kind: StreamKind, entity: u64) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut mixed = a ^ ((kind as u64) << 56) ^ entity.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut mixed)
}

pub fn stream(master: u64, kind: StreamKind, entity: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, kind, entity))
}
