//! Seeded random streams. Every consumer of randomness gets its own ChaCha20
//! stream derived from one user seed, so adding draws in one role never shifts
//! another role's numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Design = 1,
    Signs = 2,
    Truth = 3,
    Times = 4,
    Censoring = 5,
    Folds = 6,
}

pub fn stream(seed: u64, role: StreamRole) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}
