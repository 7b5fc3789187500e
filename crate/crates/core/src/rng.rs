//! Seeded random streams.
//!
//! Every random draw in the engine comes from a [`DpRng`] built here. A seed plus a
//! stream label identifies a stream; distinct labels give independent ChaCha streams,
//! so structural randomness (bootstrap, split choice) never shares draws with noise.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type DpRng = ChaCha12Rng;

/// Stream labels used across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Main = 0,
    Structure = 1,
    Noise = 2,
    Bootstrap = 3,
    Features = 4,
    Sampling = 5,
}

pub fn stream(seed: u64, stream: Stream) -> DpRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub fn seeded(seed: u64) -> DpRng {
    stream(seed, Stream::Main)
}

/// Child seed for an indexed sub-task (tree, run, model component).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

/// Child seed for a named sub-task.
pub fn named_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a; only needs to be stable, not cryptographic.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}
