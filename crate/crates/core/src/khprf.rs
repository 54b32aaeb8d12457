//! Key-homomorphic PRF `F(k, m) = k·H(m)` over the Ristretto255 group.
//!
//! `F(k1, m) + F(k2, m) = F(k1 + k2, m)` holds exactly, with key arithmetic
//! mod the group order `ℓ ≈ 2^252`.

use std::ops::{Add, Neg, Sub};

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::RngCore;
use sha2::{Digest, Sha512};
use thiserror::Error;

pub const OUTPUT_LEN: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrfError {
    #[error("invalid group element encoding")]
    InvalidEncoding,
    #[error("non-canonical key encoding")]
    InvalidKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrfKey(Scalar);

impl PrfKey {
    pub fn zero() -> Self {
        Self(Scalar::ZERO)
    }

    /// Uniform mod `ℓ`.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Self(Scalar::from_bytes_mod_order_wide(&wide))
    }

    pub fn from_int(v: i128) -> Self {
        let s = Scalar::from(v.unsigned_abs());
        Self(if v < 0 { -s } else { s })
    }

    pub fn key_add(self, v: i128) -> Self {
        self + Self::from_int(v)
    }

    pub fn key_sub(self, v: i128) -> Self {
        self - Self::from_int(v)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Result<Self, PrfError> {
        Option::from(Scalar::from_canonical_bytes(bytes))
            .map(Self)
            .ok_or(PrfError::InvalidKey)
    }
}

impl Add for PrfKey {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Sub for PrfKey {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl Neg for PrfKey {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

/// `H(m)`, reusable across keys for the same message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrfInput(RistrettoPoint);

impl PrfInput {
    pub fn new(message: &[u8]) -> Self {
        let mut h = Sha512::new();
        h.update(b"expertrec-khprf-v1");
        h.update(message);
        let wide: [u8; 64] = h.finalize().into();
        Self(RistrettoPoint::from_uniform_bytes(&wide))
    }

    pub fn eval(&self, key: &PrfKey) -> PrfOutput {
        PrfOutput(self.0 * key.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrfOutput(RistrettoPoint);

impl PrfOutput {
    pub fn identity() -> Self {
        Self(RistrettoPoint::identity())
    }

    pub fn to_bytes(&self) -> [u8; OUTPUT_LEN] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PrfError> {
        let c = CompressedRistretto::from_slice(bytes).map_err(|_| PrfError::InvalidEncoding)?;
        c.decompress().map(Self).ok_or(PrfError::InvalidEncoding)
    }
}

pub fn eval(key: &PrfKey, message: &[u8]) -> PrfOutput {
    PrfInput::new(message).eval(key)
}

pub fn combine(a: &PrfOutput, b: &PrfOutput) -> PrfOutput {
    PrfOutput(a.0 + b.0)
}
