//! Random stream handles.
//!
//! Every run owns an [`SmcRng`]. Independent streams are derived from a
//! 64-bit master seed, a role tag and an index:
//!
//! ```text
//! seed = first 8 bytes (LE) of SHA-256("coupled-smc/stream/v1" ‖ master ‖ len(tag) ‖ tag ‖ index)
//! rng  = ChaCha8::seed_from_u64(seed)
//! ```
//!
//! ChaCha is a counter-mode keyed generator, so derived streams are
//! independent of the order in which they are consumed. Inside a filter step,
//! per-pair substreams use ChaCha's 64-bit stream selector under a key drawn
//! from the run's generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SmcRng = ChaCha8Rng;

const DOMAIN: &[u8] = b"coupled-smc/stream/v1";

/// Role tags used by the experiment layer.
pub mod tags {
    pub const REPLICATE: &str = "replicate";
    pub const LEVEL: &str = "level";
    pub const HORIZON: &str = "horizon";
    pub const OBSERVATIONS: &str = "observations";
    pub const TRIAL: &str = "trial";
    pub const REFERENCE: &str = "reference";
}

/// Derives the seed of substream `(tag, index)` of `master`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(master.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> SmcRng {
    SmcRng::seed_from_u64(seed)
}

pub fn substream(master: u64, tag: &str, index: u64) -> SmcRng {
    rng_from_seed(derive_seed(master, tag, index))
}

/// Key for a family of per-item substreams, drawn from `rng`.
#[derive(Clone, Copy, Debug)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn draw(rng: &mut SmcRng) -> Self {
        StreamKey(rng.random())
    }

    pub fn stream(&self, index: u64) -> SmcRng {
        let mut rng = SmcRng::from_seed(self.0);
        rng.set_stream(index);
        rng
    }
}
