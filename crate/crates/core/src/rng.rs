//! Seeded random streams. Every stochastic choice in the crate draws from a
//! ChaCha8 generator keyed by `(seed, stream)`, so results are identical
//! across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Validation = 2,
    Shuffle = 3,
    Split = 4,
    Simulation = 5,
}

pub fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
