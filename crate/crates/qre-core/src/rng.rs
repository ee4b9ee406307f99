//! Seeded random streams used by the game generators.
//!
//! Every generated quantity is drawn from a deterministic stream keyed by a
//! 64-bit user seed and a purpose tag, so identical specs reproduce identical
//! games bit for bit, across runs and platforms. The derivation is fixed:
//!
//! * stream key = SHA-256 of the little-endian seed bytes followed by the
//!   UTF-8 bytes of the tag,
//! * the 32-byte key seeds a ChaCha12 generator (a counter-based stream
//!   cipher core; output words are consumed in the order rand_chacha emits
//!   them),
//! * `f64` values in `[0, 1)` take the top 53 bits of the next `u64`:
//!   `(x >> 11) * 2^-53`.
//!
//! All three pieces are standard, documented algorithms, so the streams can
//! be reproduced in any language.

use rand_chacha::ChaCha12Rng;
use rand_core::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

/// Independent random stream for the given seed and purpose tag.
pub fn stream(seed: u64, tag: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha12Rng::from_seed(key)
}

/// Uniform draw from `[0, 1)` using the top 53 bits of the next `u64`.
pub fn unit_f64(rng: &mut ChaCha12Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Uniform draw from `[lo, hi)`.
pub fn range_f64(rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}
