//! Test support for the lqm crates: seeded fixture generators and
//! brute-force reference implementations. The references are written
//! without calling into the code they check.

pub mod checks;
pub mod fixtures;
pub mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
