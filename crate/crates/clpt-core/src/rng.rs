//! Deterministic random-number utilities.
//!
//! Every stochastic routine in this crate takes an explicit generator, and
//! generators are derived from a `(seed_base, tags…)` pair so that independent
//! work items (different temperatures, repetitions, chains) get independent,
//! reproducible streams regardless of scheduling order.
//!
//! The stream cipher is ChaCha12; the key-derivation step is SplitMix64, which
//! mixes the base seed with each tag. Uniform doubles use the usual 53-bit
//! mantissa construction `(next_u64() >> 11) * 2^-53`; Gaussians come from the
//! Box–Muller transform.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// One step of the SplitMix64 generator/mixer.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha12 stream from a base seed and a tag list.
///
/// Tags are absorbed sequentially into the SplitMix64 state, then four outputs
/// are squeezed to form the 256-bit ChaCha key. Distinct tag lists give
/// (cryptographically) unrelated streams for the same base seed.
pub fn derive_stream(seed_base: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = seed_base;
    splitmix64(&mut state);
    for &t in tags {
        state ^= t;
        splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Uniform double in `[0, 1)` with full 53-bit resolution.
#[inline]
pub fn uniform_unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * 2.0_f64.powi(-53)
}

/// Uniform double in `[-1, 1)`.
#[inline]
pub fn uniform_symmetric(rng: &mut impl RngCore) -> f64 {
    2.0 * uniform_unit(rng) - 1.0
}

/// A pair of independent standard Gaussians via Box–Muller.
///
/// `u1` is shifted into `(0, 1]` so the logarithm is finite.
#[inline]
pub fn gaussian_pair(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = 1.0 - uniform_unit(rng);
    let u2 = uniform_unit(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// A single standard Gaussian (second Box–Muller output is discarded).
#[inline]
pub fn gaussian(rng: &mut impl RngCore) -> f64 {
    gaussian_pair(rng).0
}

/// Fills `out` with independent N(0, sigma^2) samples, consuming Box–Muller
/// outputs in pairs.
pub fn fill_gaussian(rng: &mut impl RngCore, sigma: f64, out: &mut [f64]) {
    let mut iter = out.chunks_exact_mut(2);
    for pair in &mut iter {
        let (a, b) = gaussian_pair(rng);
        pair[0] = sigma * a;
        pair[1] = sigma * b;
    }
    if let [last] = iter.into_remainder() {
        *last = sigma * gaussian(rng);
    }
}
