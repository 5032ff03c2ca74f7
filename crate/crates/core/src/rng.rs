//! Named, independent random streams derived from one seed.
//!
//! Every consumer of randomness (world resets, text variants, exploration,
//! parameter init, replay sampling, evaluation) gets its own ChaCha stream,
//! so changing how much one consumer draws never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const WORLD: &str = "world";
pub const DESCRIPTION: &str = "description";
pub const POLICY: &str = "policy";
pub const INIT: &str = "init";
pub const REPLAY: &str = "replay";
pub const EVAL_WORLD: &str = "eval-world";
pub const EVAL_DESCRIPTION: &str = "eval-description";
pub const EVAL_POLICY: &str = "eval-policy";

/// The stream called `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(name.as_bytes());
    let id = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
