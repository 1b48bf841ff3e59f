//! Seeded, splittable random streams.
//!
//! Every stochastic operation draws from a [`ChaCha8Rng`] whose key comes from the
//! run seed and whose 64-bit stream id is a hash of a purpose tag plus indices. Two
//! different `(tag, indices)` pairs never share a stream, so results depend only on
//! the seed and never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Prompt = 1,
    Response = 2,
    RewardNoise = 3,
    Shuffle = 4,
    Check = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: Purpose, indices: &[u64]) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id(purpose as u64, indices));
        rng
    }
}

fn stream_id(tag: u64, indices: &[u64]) -> u64 {
    let mut h = splitmix_mix(tag ^ 0x243F_6A88_85A3_08D3);
    for &i in indices {
        h = splitmix_mix(h ^ splitmix_mix(i.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    splitmix_mix(*state)
}

fn splitmix_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
