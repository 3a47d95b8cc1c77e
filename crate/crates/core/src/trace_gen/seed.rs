//! Splittable seeding: every run, window and generator stage gets its own
//! independent stream derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index` within a corpus.
pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64(master_seed ^ run_index)
}

/// Seed of a named sub-stream (generator stage, window, ...) of `seed`.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x5EED)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn distinct_runs_get_distinct_seeds() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| run_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn streams_are_reproducible() {
        let (mut a, mut b) = (rng_from_seed(7), rng_from_seed(7));
        for _ in 0..8 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
        assert_ne!(stream_seed(7, 0), stream_seed(7, 1));
    }
}
