//! Seed handling. Every random consumer gets its own ChaCha stream derived
//! from one root seed, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids. Bootstrap replicates use `BOOTSTRAP + b`.
pub mod stream {
    pub const SIMULATE: u64 = 1;
    pub const SYNTHETIC: u64 = 2;
    pub const BOOTSTRAP: u64 = 1 << 32;
}

/// Generator for stream `stream` of the root `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
