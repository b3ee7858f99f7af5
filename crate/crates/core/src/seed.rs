//! Deterministic noise-stream derivation for parallel Monte Carlo.
//!
//! Replicate `k`, component `j` draws from a ChaCha stream keyed by
//! `mix(master, k, j)`, so increments are identical regardless of the
//! order in which replicates are executed or which thread runs them.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Master seed plus the documented stream-derivation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub master: u64,
}

// splitmix64 finalizer; standard 64-bit mixing constants.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// 32-byte ChaCha key for (replicate, component).
    pub fn stream_key(&self, replicate: u64, component: u64) -> [u8; 32] {
        let mut state = self
            .master
            .wrapping_add(replicate.wrapping_mul(0xa076_1d64_78bd_642f))
            .wrapping_add(component.wrapping_mul(0xe703_7ed1_a0b4_28db));
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    /// Deterministic RNG for (replicate, component).
    pub fn stream(&self, replicate: u64, component: u64) -> ChaCha12Rng {
        ChaCha12Rng::from_seed(self.stream_key(replicate, component))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let spec = SeedSpec::new(42);
        let a: Vec<f64> = spec.stream(3, 1).random_iter().take(16).collect();
        let b: Vec<f64> = spec.stream(3, 1).random_iter().take(16).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_are_distinct() {
        let spec = SeedSpec::new(42);
        let a: Vec<u64> = spec.stream(0, 0).random_iter().take(4).collect();
        let b: Vec<u64> = spec.stream(1, 0).random_iter().take(4).collect();
        let c: Vec<u64> = spec.stream(0, 1).random_iter().take(4).collect();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
    }
}
