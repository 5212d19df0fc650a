//! Named random substreams derived from one master seed.
//!
//! Each component draws from its own ChaCha stream whose seed is a stable
//! hash of `(master_seed, name)`, so adding a new component never shifts the
//! numbers an existing one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn substream_seed(master: u64, name: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    seed
}

pub fn substream(master: u64, name: &str) -> Rng {
    ChaCha8Rng::from_seed(substream_seed(master, name))
}
