//! Seed derivation for reproducible, partition-invariant sampling.
//!
//! Every Monte Carlo consumer (predictor sample, study trial, sweep
//! observation, trip generator) gets its own child seed derived from the
//! master seed, a domain tag, and its index. Results are therefore
//! independent of how work is split across workers: merging per-index
//! results in index order reproduces the single-threaded stream exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep the per-index streams of different pipeline stages
/// disjoint even when they share a master seed.
#[derive(Debug, Clone, Copy)]
pub enum Domain {
    TripGen = 1,
    Predictor = 2,
    StudyTrial = 3,
    SweepObservation = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, domain: Domain, index: u64) -> u64 {
    let tagged = splitmix64(master ^ splitmix64((domain as u64) << 56));
    splitmix64(tagged ^ index)
}

pub fn rng(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, domain, index))
}
