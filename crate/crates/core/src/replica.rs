//! Deterministic replica seeding.
//!
//! Every replica owns a ChaCha8 stream selected by `(seed, index)`, so a run
//! produces the same per-replica draws whatever the thread count. Results are
//! collected in replica order and reduced sequentially by the callers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Generator for replica `index` of the experiment seeded with `seed`.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `count` replicas on the current rayon pool and returns their
/// outputs in replica order.
pub fn map_replicas<T, F>(count: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|idx| {
            let mut rng = replica_rng(seed, idx as u64);
            f(idx, &mut rng)
        })
        .collect()
}

/// Derives an independent sub-seed, used when one experiment needs several
/// unrelated seeded stages.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
