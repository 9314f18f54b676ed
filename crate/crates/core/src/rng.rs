//! Seed derivation for reproducible, scheduling-independent Monte Carlo.
//!
//! Every realization owns a generator derived only from the master seed and
//! its own indices, so results never depend on worker count or completion
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by all sampling routines.
pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = mix64(master ^ GOLDEN);
    for (depth, &p) in path.iter().enumerate() {
        h = mix64(h ^ mix64(p.wrapping_add(GOLDEN.wrapping_mul(depth as u64 + 1))));
    }
    h
}

/// Independent streams for the stochastic ingredients of one realization.
///
/// Positions, disorder and initial polarization draw from separate streams so
/// that changing, say, the disorder width leaves the sampled positions and
/// polarization pattern untouched (common random numbers across runs).
pub struct RealizationStreams {
    pub positions: SimRng,
    pub disorder: SimRng,
    pub polarization: SimRng,
}

impl RealizationStreams {
    pub fn new(master: u64, realization: u64) -> Self {
        let seed = derive_seed(master, &[realization]);
        let stream = |k: u64| {
            let mut rng = SimRng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };
        Self {
            positions: stream(1),
            disorder: stream(2),
            polarization: stream(3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, &[3]), derive_seed(7, &[3]));
        assert_ne!(derive_seed(7, &[3]), derive_seed(7, &[4]));
        assert_ne!(derive_seed(7, &[3]), derive_seed(8, &[3]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }

    #[test]
    fn streams_differ() {
        let mut s = RealizationStreams::new(1, 0);
        let a: u64 = s.positions.random();
        let b: u64 = s.disorder.random();
        let c: u64 = s.polarization.random();
        assert!(a != b && b != c && a != c);
    }
}
