//! Seeded randomness helpers shared by the crypto and protocol layers.

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rug::integer::Order;
use rug::Integer;
use sha2::{Digest, Sha256};

/// Independent ChaCha20 stream for `label` under a 64-bit master seed.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"expertrec/rng/v1");
    h.update(seed.to_le_bytes());
    h.update((label.len() as u32).to_le_bytes());
    h.update(label.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Uniform integer in `[0, 2^bits)`.
pub fn random_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u32) -> Integer {
    if bits == 0 {
        return Integer::new();
    }
    let nbytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; nbytes];
    rng.fill_bytes(&mut buf);
    let excess = nbytes as u32 * 8 - bits;
    buf[0] &= 0xffu8 >> excess;
    Integer::from_digits(&buf, Order::MsfBe)
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &Integer) -> Integer {
    assert!(*bound > 0, "empty range");
    let bits = bound.significant_bits();
    loop {
        let x = random_bits(rng, bits);
        if x < *bound {
            return x;
        }
    }
}

/// Uniform `u128` in `[0, 2^bits)`, `bits <= 128`.
pub fn random_u128_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u32) -> u128 {
    assert!(bits <= 128);
    if bits == 0 {
        return 0;
    }
    let x = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
    x >> (128 - bits)
}

/// Marker for RNGs acceptable for key material and masks.
pub trait SecureRng: RngCore + CryptoRng {}
impl<T: RngCore + CryptoRng> SecureRng for T {}
