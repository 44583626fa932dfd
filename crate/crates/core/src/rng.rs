//! Seeded random streams.
//!
//! Every consumer draws from the same ChaCha generator keyed by the run seed,
//! each on its own stream so that, for example, adding a parameter group does
//! not shift the dropout masks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Split = 2,
    Dropout = 3,
    Generator = 4,
    Decoder = 5,
    NegativeSampling = 6,
    Batch = 7,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
