//! Counter-addressed random streams.
//!
//! Every random draw in the crate is addressed by `(seed, purpose, epoch, index)`.
//! The first three select a ChaCha8 key, the index selects the ChaCha stream, so
//! the numbers drawn for one item never depend on how many other items were
//! drawn before it or on which thread drew them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Simulation = 1,
    Training = 2,
    Evaluation = 3,
    Init = 4,
    Probe = 5,
    Rules = 6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub epoch: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, epoch: u64) -> Self {
        Self {
            seed,
            purpose,
            epoch,
        }
    }

    /// Generator for item `index` of this stream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.epoch.to_le_bytes());
        key[24..].copy_from_slice(b"nosb/rng");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}
