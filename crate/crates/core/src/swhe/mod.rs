//! Batched somewhat-homomorphic encryption over `Z_q[x]/(x^n + 1)`.
//!
//! The plaintext space is `Z_t` with `t = p1·p2`, realized as two BFV
//! instances (one per 40-bit prime) that share parameters and are driven
//! in lockstep. Each of the `n` slots holds a pair of residues; by the CRT
//! this is a value mod `t`.

mod arith;
mod bfv;
mod rns;

use std::sync::Arc;

use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use arith::{is_prime, ntt_primes};

use arith::Modulus;
use bfv::BfvContext;

pub const P1: u64 = 1_099_511_922_689;
pub const P2: u64 = 1_099_512_004_609;

/// All NTT primes are `1 mod 16384`, enough for `n` up to 8192.
const PRIME_STEP: u64 = 16384;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SwheError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("slot {slot}: value {value} out of range for plaintext modulus")]
    ValueOutOfRange { slot: usize, value: u128 },
    #[error("{got} values exceed {slots} slots")]
    TooManyValues { got: usize, slots: usize },
    #[error("depth exceeded: level {level} would pass the budget of {max}")]
    DepthExceeded { level: u32, max: u32 },
    #[error("ciphertext belongs to a different key or parameter set")]
    KeyMismatch,
    #[error("malformed ciphertext: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwheParams {
    pub poly_degree: usize,
    pub plain_primes: [u64; 2],
    pub q_primes: Vec<u64>,
    /// Auxiliary basis for exact tensoring; its product must exceed `n·q`.
    pub ext_primes: Vec<u64>,
    pub sigma: f64,
    pub max_depth: u32,
}

impl SwheParams {
    /// `n = 8192`, 226-bit `q`.
    pub fn paper() -> Self {
        Self::with_degree(8192)
    }

    /// `n = 4096` with the same `q`; fast, but well under 128-bit security.
    pub fn desk() -> Self {
        Self::with_degree(4096)
    }

    pub fn with_degree(n: usize) -> Self {
        let mut q = ntt_primes(57, PRIME_STEP, 2, &[]);
        q.extend(ntt_primes(56, PRIME_STEP, 2, &[]));
        let ext = ntt_primes(60, PRIME_STEP, 5, &[]);
        Self {
            poly_degree: n,
            plain_primes: [P1, P2],
            q_primes: q,
            ext_primes: ext,
            sigma: 3.2,
            max_depth: 2,
        }
    }

    pub fn slots(&self) -> usize {
        self.poly_degree
    }

    pub fn plain_modulus(&self) -> u128 {
        self.plain_primes[0] as u128 * self.plain_primes[1] as u128
    }

    pub fn q_bits(&self) -> f64 {
        self.q_primes.iter().map(|&p| (p as f64).log2()).sum()
    }

    pub fn validate(&self) -> Result<(), SwheError> {
        let n = self.poly_degree;
        let bad = |m: String| Err(SwheError::InvalidParams(m));
        if !n.is_power_of_two() || n < 16 {
            return bad(format!("degree {n} is not a power of two >= 16"));
        }
        let two_n = 2 * n as u64;
        let [p1, p2] = self.plain_primes;
        if p1 == p2 {
            return bad("plaintext primes must be distinct".into());
        }
        for &p in &self.plain_primes {
            if !is_prime(p) || (p - 1) % two_n != 0 {
                return bad(format!("plaintext prime {p} does not support batching at n = {n}"));
            }
        }
        if self.q_primes.is_empty() || self.ext_primes.is_empty() {
            return bad("empty modulus chain".into());
        }
        let mut seen = Vec::new();
        for &q in self.q_primes.iter().chain(&self.ext_primes) {
            if q >= 1 << 61 || !is_prime(q) || (q - 1) % two_n != 0 {
                return bad(format!("modulus {q} is not an NTT prime for n = {n}"));
            }
            if self.plain_primes.contains(&q) {
                return bad(format!("plaintext modulus shares factor {q} with q"));
            }
            if seen.contains(&q) {
                return bad(format!("modulus {q} repeated"));
            }
            seen.push(q);
        }
        let q_bits = self.q_bits();
        let ext_bits: f64 = self.ext_primes.iter().map(|&p| (p as f64).log2()).sum();
        if ext_bits < q_bits + (n as f64).log2() + 2.0 {
            return bad("auxiliary basis too small for exact multiplication".into());
        }
        if q_bits < 2.0 * 41.0 {
            return bad("q too small for the plaintext modulus".into());
        }
        if self.sigma <= 0.0 || !self.sigma.is_finite() {
            return bad("noise width must be positive".into());
        }
        if self.max_depth == 0 {
            return bad("depth budget must be at least 1".into());
        }
        Ok(())
    }

    pub fn hash(&self) -> [u8; 8] {
        let mut h = Sha256::new();
        h.update(b"swhe-params");
        h.update((self.poly_degree as u64).to_le_bytes());
        for p in self
            .plain_primes
            .iter()
            .chain(&self.q_primes)
            .chain(&self.ext_primes)
        {
            h.update(p.to_le_bytes());
        }
        h.update(self.sigma.to_le_bytes());
        h.update(self.max_depth.to_le_bytes());
        let d = h.finalize();
        d[..8].try_into().unwrap()
    }
}

/// Values in the `n` slots, kept as residues mod `p1` and mod `p2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotVector {
    primes: [u64; 2],
    res: [Vec<u64>; 2],
}

impl SlotVector {
    pub fn zeros(params: &SwheParams) -> Self {
        let n = params.slots();
        Self {
            primes: params.plain_primes,
            res: [vec![0; n], vec![0; n]],
        }
    }

    /// Encodes values in `[0, t)`; unused trailing slots are zero.
    pub fn encode(params: &SwheParams, values: &[u128]) -> Result<Self, SwheError> {
        let mut v = Self::zeros(params);
        if values.len() > v.len() {
            return Err(SwheError::TooManyValues {
                got: values.len(),
                slots: v.len(),
            });
        }
        let t = params.plain_modulus();
        for (slot, &value) in values.iter().enumerate() {
            if value >= t {
                return Err(SwheError::ValueOutOfRange { slot, value });
            }
            v.set(slot, value);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.res[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.res[0].is_empty()
    }

    pub fn set(&mut self, slot: usize, value: u128) {
        for k in 0..2 {
            self.res[k][slot] = (value % self.primes[k] as u128) as u64;
        }
    }

    /// Reduces a signed value into both residue rings.
    pub fn set_signed(&mut self, slot: usize, value: i128) {
        for k in 0..2 {
            self.res[k][slot] = value.rem_euclid(self.primes[k] as i128) as u64;
        }
    }

    pub fn set_residues(&mut self, slot: usize, r1: u64, r2: u64) {
        self.res[0][slot] = r1 % self.primes[0];
        self.res[1][slot] = r2 % self.primes[1];
    }

    pub fn residues(&self, slot: usize) -> (u64, u64) {
        (self.res[0][slot], self.res[1][slot])
    }

    pub fn is_zero(&self, slot: usize) -> bool {
        self.res[0][slot] == 0 && self.res[1][slot] == 0
    }

    /// The CRT value in `[0, t)`.
    pub fn get(&self, slot: usize) -> u128 {
        let [p1, p2] = self.primes;
        let m2 = Modulus::new(p2);
        let inv = m2.inv(p1 % p2);
        let (a, b) = self.residues(slot);
        let k = m2.mul(m2.sub(b % p2, a % p2), inv);
        a as u128 + p1 as u128 * k as u128
    }

    pub fn decode(&self) -> Vec<u128> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

#[derive(Debug)]
pub struct SwheContext {
    params: SwheParams,
    hash: [u8; 8],
    inst: [BfvContext; 2],
}

impl SwheContext {
    pub fn new(params: SwheParams) -> Result<Arc<Self>, SwheError> {
        params.validate()?;
        let build = |t: u64| {
            BfvContext::new(
                params.poly_degree,
                t,
                &params.q_primes,
                &params.ext_primes,
                params.sigma,
            )
            .ok_or_else(|| SwheError::InvalidParams("no NTT for some modulus".into()))
        };
        let inst = [build(params.plain_primes[0])?, build(params.plain_primes[1])?];
        Ok(Arc::new(Self {
            hash: params.hash(),
            params,
            inst,
        }))
    }

    pub fn params(&self) -> &SwheParams {
        &self.params
    }

    pub fn params_hash(&self) -> [u8; 8] {
        self.hash
    }

    pub fn slots(&self) -> usize {
        self.params.slots()
    }
}

pub struct SwheKeyPair {
    pub secret: SwheSecretKey,
    pub public: SwhePublicKey,
}

pub struct SwheSecretKey {
    ctx: Arc<SwheContext>,
    keys: [bfv::SecretKey; 2],
    fingerprint: [u8; 8],
}

/// Public and relinearization keys; also the homomorphic evaluator.
#[derive(Clone)]
pub struct SwhePublicKey {
    ctx: Arc<SwheContext>,
    pk: [bfv::PublicKey; 2],
    rk: [bfv::RelinKey; 2],
    fingerprint: [u8; 8],
}

impl std::fmt::Debug for SwhePublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SwhePublicKey")
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

impl std::fmt::Debug for SwheSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SwheSecretKey")
            .field("fingerprint", &self.fingerprint)
            .finish_non_exhaustive()
    }
}

fn key_fingerprint(ctx: &SwheContext, pks: [&bfv::PublicKey; 2]) -> [u8; 8] {
    let mut h = Sha256::new();
    h.update(ctx.hash);
    for pk in pks {
        for x in pk.b_ntt.iter().step_by(97) {
            h.update(x.to_le_bytes());
        }
    }
    h.finalize()[..8].try_into().unwrap()
}

pub fn keygen<R: RngCore + ?Sized>(ctx: &Arc<SwheContext>, rng: &mut R) -> SwheKeyPair {
    let (s1, p1, r1) = ctx.inst[0].keygen(rng);
    let (s2, p2, r2) = ctx.inst[1].keygen(rng);
    let fingerprint = key_fingerprint(ctx, [&p1, &p2]);
    SwheKeyPair {
        secret: SwheSecretKey {
            ctx: ctx.clone(),
            keys: [s1, s2],
            fingerprint,
        },
        public: SwhePublicKey {
            ctx: ctx.clone(),
            pk: [p1, p2],
            rk: [r1, r2],
            fingerprint,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwheCiphertext {
    parts: [bfv::Ciphertext; 2],
    level: u32,
    params_hash: [u8; 8],
    key: [u8; 8],
}

impl SwheCiphertext {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn key(&self) -> [u8; 8] {
        self.key
    }

    /// Header (params hash, key fingerprint, level) then, per plaintext
    /// prime, a component count and the raw little-endian coefficients.
    pub fn to_bytes(&self) -> Vec<u8> {
        let words: usize = self
            .parts
            .iter()
            .flat_map(|c| c.parts.iter().map(Vec::len))
            .sum();
        let mut out = Vec::with_capacity(24 + words * 8);
        out.extend_from_slice(&self.params_hash);
        out.extend_from_slice(&self.key);
        out.extend_from_slice(&self.level.to_le_bytes());
        for c in &self.parts {
            out.push(c.parts.len() as u8);
            for p in &c.parts {
                for x in p {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(ctx: &SwheContext, bytes: &[u8]) -> Result<(Self, usize), SwheError> {
        let malformed = |m: &str| SwheError::Malformed(m.to_string());
        if bytes.len() < 20 {
            return Err(malformed("truncated header"));
        }
        let params_hash: [u8; 8] = bytes[..8].try_into().unwrap();
        if params_hash != ctx.hash {
            return Err(SwheError::KeyMismatch);
        }
        let key: [u8; 8] = bytes[8..16].try_into().unwrap();
        let level = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        let mut pos = 20;
        let poly_words = ctx.params.poly_degree * ctx.params.q_primes.len();
        let mut read_inst = |inst: usize| -> Result<bfv::Ciphertext, SwheError> {
            let count = *bytes.get(pos).ok_or_else(|| malformed("missing component count"))? as usize;
            pos += 1;
            if !(2..=3).contains(&count) {
                return Err(malformed("bad component count"));
            }
            let moduli = &ctx.inst[inst].q.moduli;
            let mut parts = Vec::with_capacity(count);
            for _ in 0..count {
                let end = pos + poly_words * 8;
                let chunk = bytes.get(pos..end).ok_or_else(|| malformed("truncated body"))?;
                let poly: Vec<u64> = chunk
                    .chunks_exact(8)
                    .map(|w| u64::from_le_bytes(w.try_into().unwrap()))
                    .collect();
                let n = ctx.params.poly_degree;
                for (i, m) in moduli.iter().enumerate() {
                    if poly[i * n..(i + 1) * n].iter().any(|&x| x >= m.value()) {
                        return Err(malformed("coefficient not reduced"));
                    }
                }
                parts.push(poly);
                pos = end;
            }
            Ok(bfv::Ciphertext { parts })
        };
        let c1 = read_inst(0)?;
        let c2 = read_inst(1)?;
        Ok((
            Self {
                parts: [c1, c2],
                level,
                params_hash,
                key,
            },
            pos,
        ))
    }
}

impl SwhePublicKey {
    pub fn context(&self) -> &Arc<SwheContext> {
        &self.ctx
    }

    /// Params hash, then per plaintext prime `b`, `a` and the
    /// relinearization pairs, all in NTT form over `Q`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.ctx.hash.to_vec();
        for (pk, rk) in self.pk.iter().zip(&self.rk) {
            out.push(rk.parts.len() as u8);
            let polys = [&pk.b_ntt, &pk.a_ntt]
                .into_iter()
                .chain(rk.parts.iter().flat_map(|(x, y)| [x, y]));
            for p in polys {
                for x in p {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(ctx: &Arc<SwheContext>, bytes: &[u8]) -> Result<Self, SwheError> {
        let malformed = |m: &str| SwheError::Malformed(m.to_string());
        if bytes.get(..8) != Some(&ctx.hash[..]) {
            return Err(SwheError::KeyMismatch);
        }
        let n = ctx.params.poly_degree;
        let mut pos = 8;
        let read_poly = |pos: &mut usize, moduli: &[Modulus]| -> Result<Vec<u64>, SwheError> {
            let end = *pos + n * moduli.len() * 8;
            let chunk = bytes.get(*pos..end).ok_or_else(|| malformed("truncated key"))?;
            *pos = end;
            let poly: Vec<u64> = chunk
                .chunks_exact(8)
                .map(|w| u64::from_le_bytes(w.try_into().unwrap()))
                .collect();
            for (i, m) in moduli.iter().enumerate() {
                if poly[i * n..(i + 1) * n].iter().any(|&x| x >= m.value()) {
                    return Err(malformed("key coefficient not reduced"));
                }
            }
            Ok(poly)
        };
        let mut pks = Vec::with_capacity(2);
        let mut rks = Vec::with_capacity(2);
        for inst in &ctx.inst {
            let count = *bytes.get(pos).ok_or_else(|| malformed("truncated key"))? as usize;
            pos += 1;
            if count != inst.gadget_count {
                return Err(malformed("relinearization key size"));
            }
            let moduli = &inst.q.moduli;
            let b_ntt = read_poly(&mut pos, moduli)?;
            let a_ntt = read_poly(&mut pos, moduli)?;
            let parts = (0..count)
                .map(|_| Ok((read_poly(&mut pos, moduli)?, read_poly(&mut pos, moduli)?)))
                .collect::<Result<Vec<_>, SwheError>>()?;
            pks.push(bfv::PublicKey { b_ntt, a_ntt });
            rks.push(bfv::RelinKey { parts });
        }
        if pos != bytes.len() {
            return Err(malformed("trailing bytes after key"));
        }
        let pk: [bfv::PublicKey; 2] = pks.try_into().unwrap();
        let fingerprint = key_fingerprint(ctx, [&pk[0], &pk[1]]);
        Ok(Self {
            ctx: ctx.clone(),
            pk,
            rk: rks.try_into().unwrap(),
            fingerprint,
        })
    }

    pub fn fingerprint(&self) -> [u8; 8] {
        self.fingerprint
    }

    fn check(&self, c: &SwheCiphertext) -> Result<(), SwheError> {
        if c.key != self.fingerprint || c.params_hash != self.ctx.hash {
            return Err(SwheError::KeyMismatch);
        }
        Ok(())
    }

    fn check_slots(&self, v: &SlotVector) -> Result<(), SwheError> {
        if v.len() != self.ctx.slots() || v.primes != self.ctx.params.plain_primes {
            return Err(SwheError::InvalidParams("slot vector shape".into()));
        }
        Ok(())
    }

    fn wrap(&self, parts: [bfv::Ciphertext; 2], level: u32) -> SwheCiphertext {
        SwheCiphertext {
            parts,
            level,
            params_hash: self.ctx.hash,
            key: self.fingerprint,
        }
    }

    fn plain(&self, v: &SlotVector) -> [Vec<u64>; 2] {
        [
            self.ctx.inst[0].encode_slots(&v.res[0]),
            self.ctx.inst[1].encode_slots(&v.res[1]),
        ]
    }

    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        v: &SlotVector,
        rng: &mut R,
    ) -> Result<SwheCiphertext, SwheError> {
        self.check_slots(v)?;
        let [m1, m2] = self.plain(v);
        let c1 = self.ctx.inst[0].encrypt(&self.pk[0], &m1, rng);
        let c2 = self.ctx.inst[1].encrypt(&self.pk[1], &m2, rng);
        Ok(self.wrap([c1, c2], 0))
    }

    pub fn add(&self, a: &SwheCiphertext, b: &SwheCiphertext) -> Result<SwheCiphertext, SwheError> {
        self.check(a)?;
        self.check(b)?;
        let i = &self.ctx.inst;
        Ok(self.wrap(
            [i[0].add(&a.parts[0], &b.parts[0]), i[1].add(&a.parts[1], &b.parts[1])],
            a.level.max(b.level),
        ))
    }

    pub fn sub(&self, a: &SwheCiphertext, b: &SwheCiphertext) -> Result<SwheCiphertext, SwheError> {
        self.check(a)?;
        self.check(b)?;
        let i = &self.ctx.inst;
        Ok(self.wrap(
            [i[0].sub(&a.parts[0], &b.parts[0]), i[1].sub(&a.parts[1], &b.parts[1])],
            a.level.max(b.level),
        ))
    }

    pub fn add_plain(&self, a: &SwheCiphertext, v: &SlotVector) -> Result<SwheCiphertext, SwheError> {
        self.check(a)?;
        self.check_slots(v)?;
        let [m1, m2] = self.plain(v);
        let i = &self.ctx.inst;
        Ok(self.wrap(
            [i[0].add_plain(&a.parts[0], &m1), i[1].add_plain(&a.parts[1], &m2)],
            a.level,
        ))
    }

    pub fn sub_plain(&self, a: &SwheCiphertext, v: &SlotVector) -> Result<SwheCiphertext, SwheError> {
        self.check(a)?;
        self.check_slots(v)?;
        let [m1, m2] = self.plain(v);
        let i = &self.ctx.inst;
        Ok(self.wrap(
            [i[0].sub_plain(&a.parts[0], &m1), i[1].sub_plain(&a.parts[1], &m2)],
            a.level,
        ))
    }

    /// Plaintext-ciphertext product; does not consume a level.
    pub fn mul_plain(&self, a: &SwheCiphertext, v: &SlotVector) -> Result<SwheCiphertext, SwheError> {
        self.check(a)?;
        self.check_slots(v)?;
        let [m1, m2] = self.plain(v);
        let i = &self.ctx.inst;
        Ok(self.wrap(
            [i[0].mul_plain(&a.parts[0], &m1), i[1].mul_plain(&a.parts[1], &m2)],
            a.level,
        ))
    }

    pub fn mul(&self, a: &SwheCiphertext, b: &SwheCiphertext) -> Result<SwheCiphertext, SwheError> {
        self.check(a)?;
        self.check(b)?;
        let level = a.level.max(b.level) + 1;
        let max = self.ctx.params.max_depth;
        if level > max {
            return Err(SwheError::DepthExceeded { level, max });
        }
        let i = &self.ctx.inst;
        Ok(self.wrap(
            [
                i[0].mul(&a.parts[0], &b.parts[0], &self.rk[0]),
                i[1].mul(&a.parts[1], &b.parts[1], &self.rk[1]),
            ],
            level,
        ))
    }
}

impl SwheSecretKey {
    pub fn context(&self) -> &Arc<SwheContext> {
        &self.ctx
    }

    pub fn fingerprint(&self) -> [u8; 8] {
        self.fingerprint
    }

    pub fn decrypt(&self, c: &SwheCiphertext) -> Result<SlotVector, SwheError> {
        if c.key != self.fingerprint || c.params_hash != self.ctx.hash {
            return Err(SwheError::KeyMismatch);
        }
        let i = &self.ctx.inst;
        let r1 = i[0].decode_slots(&i[0].decrypt(&self.keys[0], &c.parts[0]));
        let r2 = i[1].decode_slots(&i[1].decrypt(&self.keys[1], &c.parts[1]));
        Ok(SlotVector {
            primes: self.ctx.params.plain_primes,
            res: [r1, r2],
        })
    }

    /// Smaller of the two instances' remaining budgets, in bits.
    pub fn noise_budget(&self, c: &SwheCiphertext) -> Result<i64, SwheError> {
        if c.key != self.fingerprint {
            return Err(SwheError::KeyMismatch);
        }
        let i = &self.ctx.inst;
        Ok(i[0]
            .noise_budget(&self.keys[0], &c.parts[0])
            .min(i[1].noise_budget(&self.keys[1], &c.parts[1])))
    }
}
