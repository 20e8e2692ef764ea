//! Deterministic random streams.
//!
//! All randomized components derive their randomness from a master `u64` seed
//! plus a stream index (round counter, repetition counter, problem index).
//! Streams are counter-addressable: stream `k` can be opened without
//! generating streams `0..k`, so batches are reproducible and independent of
//! evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

/// Opens stream `index` of the generator family identified by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw from `[0, 1)` with 53 bits of resolution.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform draw from `{0, 1, ..., n-1}` by rejection, bias-free.
pub fn uniform_usize(rng: &mut ChaCha8Rng, n: usize) -> usize {
    assert!(n > 0);
    let n = n as u64;
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}
