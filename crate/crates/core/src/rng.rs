//! Seed derivation for reproducible, worker-count independent simulation.
//!
//! Every random quantity is drawn from a ChaCha8 stream (a counter-based
//! generator) whose key is derived from the master seed and a path of labels,
//! and whose stream id selects the firm. Two draws never share a stream, so the
//! order in which workers process firms cannot change any output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels. Each purpose gets its own key so e.g. adding a noise draw to
/// an experiment does not shift the covariate draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    CommonFactors = 1,
    Idiosyncratic = 2,
    Exits = 3,
    Noise = 4,
    Masking = 5,
    SolverInit = 6,
    Replication = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a parent seed with a label into a child seed.
pub fn derive(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(label.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Seed for replication `index` of an experiment with the given master seed.
pub fn replication_seed(master: u64, index: usize) -> u64 {
    derive(derive(master, Purpose::Replication as u64), index as u64)
}

/// Generator for one (purpose, firm) pair under `seed`.
pub fn substream(seed: u64, purpose: Purpose, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, purpose as u64));
    rng.set_stream(stream);
    rng
}
