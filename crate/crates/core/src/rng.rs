//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha12 generator keyed by the
//! master seed. Independent trials use distinct stream ids, so a trial's
//! draws depend only on `(master_seed, stream)` and never on the order in
//! which trials execute.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type TrialRng = ChaCha12Rng;

/// Generator for stream `stream` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> TrialRng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for trial `trial` of the sweep cell `(n, l, m, k)`.
///
/// The solver is deliberately not part of the key: every solver in a cell
/// sees the same scenarios.
pub fn trial_stream(n: usize, l: usize, m: usize, k: usize, trial: u64) -> u64 {
    let mut h = splitmix64(n as u64);
    for v in [l as u64, m as u64, k as u64, trial] {
        h = splitmix64(h ^ v);
    }
    h
}

/// Stream id for the pilot matrix shared by a cell when pilots are held fixed.
pub fn pilot_stream(n: usize, l: usize) -> u64 {
    splitmix64(splitmix64(n as u64 ^ 0x5049_4c4f_5453) ^ l as u64)
}
