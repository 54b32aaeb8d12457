//! Paillier encryption with generator `g = n + 1` and CRT decryption.
//!
//! Plaintexts live in `Z_n`. Negative values are represented by their
//! additive inverse mod `n`; [`SecretKey::decrypt_signed`] maps results back
//! to the centered range. Decrypting under the wrong key is not detected and
//! yields an unrelated plaintext.

use rand::RngCore;
use rug::integer::{IsPrime, Order};
use rug::Integer;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{random_below, random_bits};

pub const MIN_KEY_BITS: u32 = 1024;
pub const DEFAULT_KEY_BITS: u32 = 2048;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PaillierError {
    #[error("key size {bits} below the {min}-bit floor")]
    KeyTooSmall { bits: u32, min: u32 },
    #[error("key size {0} must be even")]
    OddKeySize(u32),
    #[error("plaintext outside [0, n)")]
    PlaintextOutOfRange,
    #[error("ciphertext belongs to key {found:?}, expected {expected:?}")]
    KeyMismatch {
        expected: KeyFingerprint,
        found: KeyFingerprint,
    },
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

/// First eight bytes of SHA-256 over the big-endian modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyFingerprint(pub [u8; 8]);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: Integer,
    n_squared: Integer,
    half_n: Integer,
    fingerprint: KeyFingerprint,
}

#[derive(Debug, Clone)]
pub struct SecretKey {
    public: PublicKey,
    p: Integer,
    q: Integer,
    p_squared: Integer,
    q_squared: Integer,
    p_minus_1: Integer,
    q_minus_1: Integer,
    // L_p(g^(p-1) mod p^2)^-1 mod p and the q analogue
    hp: Integer,
    hq: Integer,
    // p^-1 mod q for recombination mod n, p^2^-1 mod q^2 for mod n^2
    p_inv_q: Integer,
    p2_inv_q2: Integer,
    // n reduced mod phi(p^2) and phi(q^2)
    n_mod_phi_p2: Integer,
    n_mod_phi_q2: Integer,
}

#[derive(Debug, Clone)]
pub struct PaillierKeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: Integer,
    key: KeyFingerprint,
    // encoded length of the magnitude, the byte length of n^2
    width: u16,
}

fn fingerprint_of(n: &Integer) -> KeyFingerprint {
    let digest = Sha256::digest(n.to_digits::<u8>(Order::MsfBe));
    let mut fp = [0u8; 8];
    fp.copy_from_slice(&digest[..8]);
    KeyFingerprint(fp)
}

fn random_prime<R: RngCore + ?Sized>(rng: &mut R, bits: u32) -> Integer {
    loop {
        let mut cand = random_bits(rng, bits);
        cand.set_bit(bits - 1, true);
        cand.set_bit(bits - 2, true);
        cand.set_bit(0, true);
        let p = cand.next_prime();
        if p.significant_bits() == bits && p.is_probably_prime(40) != IsPrime::No {
            return p;
        }
    }
}

/// Generates a key pair with a modulus of exactly `bits` bits.
pub fn keygen<R: RngCore + ?Sized>(bits: u32, rng: &mut R) -> Result<PaillierKeyPair, PaillierError> {
    if bits < MIN_KEY_BITS {
        return Err(PaillierError::KeyTooSmall {
            bits,
            min: MIN_KEY_BITS,
        });
    }
    if bits % 2 != 0 {
        return Err(PaillierError::OddKeySize(bits));
    }
    let p = random_prime(rng, bits / 2);
    let q = loop {
        let q = random_prime(rng, bits / 2);
        if q != p {
            break q;
        }
    };
    Ok(PaillierKeyPair::from_primes(p, q))
}

impl PaillierKeyPair {
    /// Builds the key pair from two distinct primes of equal length.
    pub fn from_primes(p: Integer, q: Integer) -> Self {
        let n = Integer::from(&p * &q);
        let public = PublicKey::new(n);
        let p_squared = Integer::from(p.square_ref());
        let q_squared = Integer::from(q.square_ref());
        let p_minus_1 = Integer::from(&p - 1u32);
        let q_minus_1 = Integer::from(&q - 1u32);
        let g = Integer::from(&public.n + 1u32);
        let h = |prime: &Integer, prime_sq: &Integer, pm1: &Integer| {
            let gp = Integer::from(g.pow_mod_ref(pm1, prime_sq).unwrap());
            let l = Integer::from(gp - 1u32) / prime;
            l.invert(prime).expect("g is a valid generator")
        };
        let hp = h(&p, &p_squared, &p_minus_1);
        let hq = h(&q, &q_squared, &q_minus_1);
        let p_inv_q = p.clone().invert(&q).expect("distinct primes");
        let p2_inv_q2 = p_squared.clone().invert(&q_squared).expect("distinct primes");
        let phi_p2 = Integer::from(&p * &p_minus_1);
        let phi_q2 = Integer::from(&q * &q_minus_1);
        let n_mod_phi_p2 = Integer::from(&public.n % &phi_p2);
        let n_mod_phi_q2 = Integer::from(&public.n % &phi_q2);
        let secret = SecretKey {
            public: public.clone(),
            p,
            q,
            p_squared,
            q_squared,
            p_minus_1,
            q_minus_1,
            hp,
            hq,
            p_inv_q,
            p2_inv_q2,
            n_mod_phi_p2,
            n_mod_phi_q2,
        };
        Self { public, secret }
    }
}

impl PublicKey {
    pub fn new(n: Integer) -> Self {
        let n_squared = Integer::from(n.square_ref());
        let half_n = Integer::from(&n >> 1u32);
        let fingerprint = fingerprint_of(&n);
        Self {
            n,
            n_squared,
            half_n,
            fingerprint,
        }
    }

    pub fn n(&self) -> &Integer {
        &self.n
    }

    pub fn bits(&self) -> u32 {
        self.n.significant_bits()
    }

    pub fn fingerprint(&self) -> KeyFingerprint {
        self.fingerprint
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key != self.fingerprint {
            return Err(PaillierError::KeyMismatch {
                expected: self.fingerprint,
                found: c.key,
            });
        }
        Ok(())
    }

    fn wrap(&self, value: Integer) -> Ciphertext {
        Ciphertext {
            value,
            key: self.fingerprint,
            width: self.n_squared.significant_bits().div_ceil(8) as u16,
        }
    }

    /// Reduces a signed integer into `[0, n)`.
    pub fn reduce(&self, m: &Integer) -> Integer {
        let mut r = Integer::from(m % &self.n);
        if r < 0 {
            r += &self.n;
        }
        r
    }

    // (1 + m n) mod n^2 == g^m
    fn g_pow(&self, m: &Integer) -> Integer {
        let mut gm = Integer::from(m * &self.n);
        gm += 1u32;
        gm %= &self.n_squared;
        gm
    }

    fn random_unit<R: RngCore + ?Sized>(&self, rng: &mut R) -> Integer {
        loop {
            let r = random_below(rng, &self.n);
            if r > 0 && Integer::from(r.gcd_ref(&self.n)) == 1 {
                return r;
            }
        }
    }

    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        m: &Integer,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        if *m < 0 || *m >= self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let r = self.random_unit(rng);
        let rn = Integer::from(r.pow_mod_ref(&self.n, &self.n_squared).unwrap());
        let mut c = self.g_pow(m);
        c *= rn;
        c %= &self.n_squared;
        Ok(self.wrap(c))
    }

    /// Encrypts a signed value via its representative mod `n`.
    pub fn encrypt_signed<R: RngCore + ?Sized>(
        &self,
        m: &Integer,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        self.encrypt(&self.reduce(m), rng)
    }

    /// `Enc(m1 + m2)`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        self.check(b)?;
        let mut c = Integer::from(&a.value * &b.value);
        c %= &self.n_squared;
        Ok(self.wrap(c))
    }

    /// `Enc(m + k)` for `k` in `Z_n`; deterministic in its inputs.
    pub fn add_plain(&self, a: &Ciphertext, k: &Integer) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        if *k < 0 || *k >= self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let mut c = self.g_pow(k);
        c *= &a.value;
        c %= &self.n_squared;
        Ok(self.wrap(c))
    }

    /// `Enc(m + k)` for any signed `k`.
    pub fn add_plain_signed(&self, a: &Ciphertext, k: &Integer) -> Result<Ciphertext, PaillierError> {
        self.add_plain(a, &self.reduce(k))
    }

    /// `Enc(m - k)`, i.e. `add_plain` of `n - k`.
    pub fn sub_plain(&self, a: &Ciphertext, k: &Integer) -> Result<Ciphertext, PaillierError> {
        if *k < 0 || *k >= self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let neg = self.reduce(&Integer::from(-k));
        self.add_plain(a, &neg)
    }

    /// `Enc(k * m)` for `k` in `Z_n`. Exponents above `n/2` are evaluated as
    /// a negative power of the inverse, which keeps small signed scalars cheap.
    pub fn scalar_mul(&self, a: &Ciphertext, k: &Integer) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        if *k < 0 || *k >= self.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let value = if *k > self.half_n {
            let e = Integer::from(&self.n - k);
            let inv = Integer::from(a.value.invert_ref(&self.n_squared).ok_or(
                PaillierError::Malformed("ciphertext is not a unit mod n^2"),
            )?);
            Integer::from(inv.pow_mod_ref(&e, &self.n_squared).unwrap())
        } else {
            Integer::from(a.value.pow_mod_ref(k, &self.n_squared).unwrap())
        };
        Ok(self.wrap(value))
    }

    pub fn scalar_mul_signed(&self, a: &Ciphertext, k: &Integer) -> Result<Ciphertext, PaillierError> {
        self.scalar_mul(a, &self.reduce(k))
    }

    /// Multiplies in a fresh `r^n`; the plaintext is unchanged.
    pub fn rerandomize<R: RngCore + ?Sized>(
        &self,
        a: &Ciphertext,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        self.check(a)?;
        let r = self.random_unit(rng);
        let mut c = Integer::from(r.pow_mod_ref(&self.n, &self.n_squared).unwrap());
        c *= &a.value;
        c %= &self.n_squared;
        Ok(self.wrap(c))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_magnitude(&self.n)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), PaillierError> {
        let (n, used) = decode_magnitude(bytes)?;
        if n < 3 {
            return Err(PaillierError::Malformed("modulus too small"));
        }
        Ok((Self::new(n), used))
    }
}

impl SecretKey {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<Integer, PaillierError> {
        self.public.check(c)?;
        let half = |prime: &Integer, prime_sq: &Integer, pm1: &Integer, h: &Integer| {
            let cp = Integer::from(&c.value % prime_sq);
            let u = Integer::from(cp.pow_mod_ref(pm1, prime_sq).unwrap());
            let l = Integer::from(u - 1u32) / prime;
            let mut m = l * h;
            m %= prime;
            m
        };
        let mp = half(&self.p, &self.p_squared, &self.p_minus_1, &self.hp);
        let mq = half(&self.q, &self.q_squared, &self.q_minus_1, &self.hq);
        // m = mp + p * ((mq - mp) * p^-1 mod q)
        let mut t = Integer::from(&mq - &mp);
        t *= &self.p_inv_q;
        t %= &self.q;
        if t < 0 {
            t += &self.q;
        }
        t *= &self.p;
        t += mp;
        Ok(t)
    }

    /// Decrypts into the centered range `(-n/2, n/2]`.
    pub fn decrypt_signed(&self, c: &Ciphertext) -> Result<Integer, PaillierError> {
        let m = self.decrypt(c)?;
        Ok(if m > self.public.half_n {
            m - &self.public.n
        } else {
            m
        })
    }

    /// Encryption by the key owner: `r^n` is computed mod `p^2` and `q^2`
    /// separately. Output distribution is identical to [`PublicKey::encrypt`].
    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        m: &Integer,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        let pk = &self.public;
        if *m < 0 || *m >= pk.n {
            return Err(PaillierError::PlaintextOutOfRange);
        }
        let r = pk.random_unit(rng);
        let rp = Integer::from(r.pow_mod_ref(&self.n_mod_phi_p2, &self.p_squared).unwrap());
        let rq = Integer::from(r.pow_mod_ref(&self.n_mod_phi_q2, &self.q_squared).unwrap());
        let mut t = Integer::from(&rq - &rp);
        t *= &self.p2_inv_q2;
        t %= &self.q_squared;
        if t < 0 {
            t += &self.q_squared;
        }
        t *= &self.p_squared;
        t += rp;
        let mut c = pk.g_pow(m);
        c *= t;
        c %= &pk.n_squared;
        Ok(pk.wrap(c))
    }

    pub fn encrypt_signed<R: RngCore + ?Sized>(
        &self,
        m: &Integer,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        self.encrypt(&self.public.reduce(m), rng)
    }
}

impl Ciphertext {
    pub fn key(&self) -> KeyFingerprint {
        self.key
    }

    pub fn value(&self) -> &Integer {
        &self.value
    }

    /// `u16` little-endian length, big-endian magnitude zero-padded to the
    /// byte length of `n²`, 8-byte key fingerprint. Every ciphertext under
    /// one key has the same encoded size.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = encode_padded(&self.value, self.width as usize);
        out.extend_from_slice(&self.key.0);
        out
    }

    /// Parses one ciphertext from the front of `bytes`, returning the number
    /// of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), PaillierError> {
        let (value, used) = decode_magnitude(bytes)?;
        let fp = bytes
            .get(used..used + 8)
            .ok_or(PaillierError::Malformed("truncated fingerprint"))?;
        let mut key = [0u8; 8];
        key.copy_from_slice(fp);
        Ok((
            Self {
                value,
                key: KeyFingerprint(key),
                width: (used - 2) as u16,
            },
            used + 8,
        ))
    }
}

fn encode_magnitude(x: &Integer) -> Vec<u8> {
    let digits = x.to_digits::<u8>(Order::MsfBe);
    let len = u16::try_from(digits.len()).expect("value fits a u16 length prefix");
    let mut out = Vec::with_capacity(2 + digits.len());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&digits);
    out
}

fn encode_padded(x: &Integer, width: usize) -> Vec<u8> {
    let digits = x.to_digits::<u8>(Order::MsfBe);
    let width = width.max(digits.len());
    let len = u16::try_from(width).expect("value fits a u16 length prefix");
    let mut out = Vec::with_capacity(2 + width);
    out.extend_from_slice(&len.to_le_bytes());
    out.resize(2 + width - digits.len(), 0);
    out.extend_from_slice(&digits);
    out
}

fn decode_magnitude(bytes: &[u8]) -> Result<(Integer, usize), PaillierError> {
    let len_bytes = bytes
        .get(..2)
        .ok_or(PaillierError::Malformed("truncated length"))?;
    let len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
    let digits = bytes
        .get(2..2 + len)
        .ok_or(PaillierError::Malformed("truncated magnitude"))?;
    Ok((Integer::from_digits(digits, Order::MsfBe), 2 + len))
}
