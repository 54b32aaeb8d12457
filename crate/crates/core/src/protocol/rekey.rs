//! Key switch through a decrypting party that only sees a masked value.
//!
//! The requester adds a random mask `r` under key A, the holder of `sk_A`
//! decrypts and re-encrypts under key B, and the requester subtracts `r`
//! under key B. The mask has `λ` more bits than the plaintext bound, so
//! nothing wraps in either modulus.

use rand::RngCore;
use rug::Integer;

use super::{ProtocolError, LAMBDA};
use crate::paillier::{Ciphertext, PublicKey, SecretKey};
use crate::rng::random_bits;

fn guard(plaintext_bits: u32, pk: &PublicKey) -> Result<(), ProtocolError> {
    if plaintext_bits + LAMBDA + 2 >= pk.bits() {
        return Err(ProtocolError::Config(
            "rekey mask does not fit the plaintext space".into(),
        ));
    }
    Ok(())
}

/// Requester, step 1. `ct` must hold a value in `[0, 2^plaintext_bits)`.
pub fn rekey_mask<R: RngCore + ?Sized>(
    pk_a: &PublicKey,
    pk_b: &PublicKey,
    ct: &Ciphertext,
    plaintext_bits: u32,
    rng: &mut R,
) -> Result<(Ciphertext, Integer), ProtocolError> {
    let mask = random_bits(rng, plaintext_bits + LAMBDA);
    Ok((mask_with(pk_a, pk_b, ct, plaintext_bits, &mask)?, mask))
}

fn mask_with(
    pk_a: &PublicKey,
    pk_b: &PublicKey,
    ct: &Ciphertext,
    plaintext_bits: u32,
    mask: &Integer,
) -> Result<Ciphertext, ProtocolError> {
    guard(plaintext_bits, pk_a)?;
    guard(plaintext_bits, pk_b)?;
    Ok(pk_a.add_plain(ct, mask)?)
}

/// Decrypting party: returns the re-encryption and the value it saw.
pub fn rekey_proxy<R: RngCore + ?Sized>(
    sk_a: &SecretKey,
    pk_b: &PublicKey,
    masked: &Ciphertext,
    rng: &mut R,
) -> Result<(Ciphertext, Integer), ProtocolError> {
    let seen = sk_a.decrypt(masked)?;
    let ct = pk_b.encrypt(&seen, rng)?;
    Ok((ct, seen))
}

/// Requester, step 2.
pub fn rekey_unmask(
    pk_b: &PublicKey,
    ct_b: &Ciphertext,
    mask: &Integer,
) -> Result<Ciphertext, ProtocolError> {
    Ok(pk_b.sub_plain(ct_b, mask)?)
}

#[derive(Debug, Clone)]
pub struct RekeyOutcome {
    pub ciphertext: Ciphertext,
    /// What the decrypting party observed.
    pub proxy_view: Integer,
}

/// Runs all three steps. `mask` overrides the random mask (tests only).
pub fn rekey_masked<R: RngCore + ?Sized>(
    ct: &Ciphertext,
    pk_a: &PublicKey,
    sk_a: &SecretKey,
    pk_b: &PublicKey,
    plaintext_bits: u32,
    mask: Option<Integer>,
    rng: &mut R,
) -> Result<RekeyOutcome, ProtocolError> {
    let (masked, mask) = match mask {
        Some(m) => (mask_with(pk_a, pk_b, ct, plaintext_bits, &m)?, m),
        None => rekey_mask(pk_a, pk_b, ct, plaintext_bits, rng)?,
    };
    let (ct_b, seen) = rekey_proxy(sk_a, pk_b, &masked, rng)?;
    Ok(RekeyOutcome {
        ciphertext: rekey_unmask(pk_b, &ct_b, &mask)?,
        proxy_view: seen,
    })
}
