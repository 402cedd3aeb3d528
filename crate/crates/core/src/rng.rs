//! Keyed random streams.
//!
//! Every random quantity in the pipeline is drawn from a ChaCha stream keyed
//! by `(master seed, purpose, index)`. ChaCha is counter based, so a stream
//! depends only on its key and never on which thread consumed it or in
//! which order shards were scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Posterior sampling for one shard; index is the shard id.
    Shard,
    /// Sampling the full-data reference posterior.
    Oracle,
    /// Random permutation used by partitioning.
    Partition,
    /// Synthetic data generation.
    Simulate,
    /// Inverse-CDF resampling; index is the coordinate.
    Resample,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Shard => 0x5348_4152_4400_0001,
            Purpose::Oracle => 0x4f52_4143_4c45_0002,
            Purpose::Partition => 0x5041_5254_0000_0003,
            Purpose::Simulate => 0x5349_4d55_4c00_0004,
            Purpose::Resample => 0x5245_5341_4d00_0005,
        }
    }
}

/// Key identifying one independent stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub index: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, index: u64) -> Self {
        Self {
            seed,
            purpose,
            index,
        }
    }

    /// Stream for shard `shard_id` under `seed`.
    pub fn shard(seed: u64, shard_id: usize) -> Self {
        Self::new(seed, Purpose::Shard, shard_id as u64)
    }

    pub fn oracle(seed: u64) -> Self {
        Self::new(seed, Purpose::Oracle, 0)
    }

    /// Build the generator for this key.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut state = self.seed ^ self.purpose.tag();
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.index);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
