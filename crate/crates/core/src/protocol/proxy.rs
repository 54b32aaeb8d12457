//! Three-party protocol: the same masked reduction, then a membership test
//! run by a proxy over key-homomorphic PRF shares.
//!
//! ```text
//! RecSys: Δ_j = ⟦x_j θ + y_j⟧ ⊕ ((L − r_j1) θ + r_j2)             → User
//! User:   β_j = ⌊Dec(Δ_j)/θ⌋ = x_j + L − r_j1 + ε_j
//!         γ'_j = r_j3 + β_j − L if unrated, r_j3 otherwise         → RecSys
//!         Υ_j = F(K_j − r_j3, R_j)                                  → Proxy
//!         H(F(K_j + V_x, R_j)) for every x, shuffled                 → Proxy
//! RecSys: γ_j = γ'_j + r_j1;  F(γ_j, R_j)                            → Proxy
//! Proxy:  b_j = [H(F(γ_j, R_j) + Υ_j) is among the check values]    → User
//! ```
//!
//! The user and the recommender share a setup seed that fixes the nonces
//! `R_j` and the item order `PM` seen by the proxy. `K_j` stays with the user.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rug::Integer;
use sha2::{Digest, Sha256};

use super::codec::{Reader, Writer};
use super::noproxy::ReduceMasked;
use super::{
    alpha_bound, check_guard, lift, mask_for_reduction, sample_masks, unmask_round, MaskSign,
    ProtocolError, ReductionRecord, ThresholdSet, LAMBDA,
};
use crate::counters::OpCounters;
use crate::khprf::{combine, PrfInput, PrfKey, PrfOutput, OUTPUT_LEN};
use crate::paillier::{Ciphertext, PublicKey, SecretKey};
use crate::rng::{derive_rng, random_u128_bits};

/// Width of `r3`; `γ` is seen by the recommender together with `r1`.
pub const R3_BITS: u32 = 3 * LAMBDA;
pub const CHECK_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyConfig {
    pub theta: u64,
    pub thresholds: ThresholdSet,
}

/// State shared by the user and the recommender, expanded from a seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedSetup {
    pub seed: [u8; 32],
    pub session_id: [u8; 16],
    pub nonces: Vec<[u8; 32]>,
    /// Position `p` carries item `order[p]`.
    pub order: Vec<usize>,
    /// Per item, the order of its `T` check values.
    pub inner: Vec<Vec<usize>>,
}

impl SharedSetup {
    pub fn from_seed(seed: [u8; 32], m: usize, t: usize) -> Self {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let mut session_id = [0u8; 16];
        rng.fill_bytes(&mut session_id);
        let nonces = (0..m)
            .map(|_| {
                let mut r = [0u8; 32];
                rng.fill_bytes(&mut r);
                r
            })
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let inner = (0..m)
            .map(|_| {
                let mut p: Vec<usize> = (0..t).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        Self {
            seed,
            session_id,
            nonces,
            order,
            inner,
        }
    }

    fn inputs(&self) -> Vec<PrfInput> {
        self.nonces.iter().map(|r| PrfInput::new(r)).collect()
    }
}

/// SETUP_SEED
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetupSeed(pub [u8; 32]);

/// GAMMA_SHARES, in item order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GammaShares {
    pub gammas: Vec<i128>,
}

/// PRF_SHARES_USER and PRF_SHARES_RECSYS, in proxy order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrfShares {
    pub shares: Vec<PrfOutput>,
}

/// CHECK_VALUES: `T` tags per position, shuffled within the position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckValues {
    pub per_item: u8,
    pub tags: Vec<[u8; CHECK_LEN]>,
}

/// MATCH_RESULT, in proxy order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub bits: Vec<bool>,
}

impl SetupSeed {
    pub fn to_payload(&self) -> Vec<u8> {
        self.0.to_vec()
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let seed = r.take(32)?.try_into().unwrap();
        r.finish()?;
        Ok(Self(seed))
    }
}

impl GammaShares {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.gammas.len() as u32);
        for &g in &self.gammas {
            w.i128(g);
        }
        w.buf
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let n = r.count(16)?;
        let gammas = (0..n).map(|_| r.i128()).collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(Self { gammas })
    }
}

impl PrfShares {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.shares.len() as u32);
        for s in &self.shares {
            w.bytes(&s.to_bytes());
        }
        w.buf
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let n = r.count(OUTPUT_LEN)?;
        let shares = (0..n)
            .map(|_| Ok(PrfOutput::from_bytes(r.take(OUTPUT_LEN)?)?))
            .collect::<Result<_, ProtocolError>>()?;
        r.finish()?;
        Ok(Self { shares })
    }
}

impl CheckValues {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u8(self.per_item);
        w.u32(self.tags.len() as u32);
        for t in &self.tags {
            w.bytes(t);
        }
        w.buf
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let per_item = r.u8()?;
        let n = r.count(CHECK_LEN)?;
        if per_item == 0 || n % per_item as usize != 0 {
            return Err(ProtocolError::Malformed("check value count".into()));
        }
        let tags = (0..n)
            .map(|_| Ok(r.take(CHECK_LEN)?.try_into().unwrap()))
            .collect::<Result<_, ProtocolError>>()?;
        r.finish()?;
        Ok(Self { per_item, tags })
    }
}

impl MatchResult {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.bits.len() as u32);
        for &b in &self.bits {
            w.u8(b as u8);
        }
        w.buf
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let n = r.count(1)?;
        let bits = (0..n)
            .map(|_| match r.u8()? {
                0 => Ok(false),
                1 => Ok(true),
                b => Err(ProtocolError::Malformed(format!("match bit {b}"))),
            })
            .collect::<Result<_, _>>()?;
        r.finish()?;
        Ok(Self { bits })
    }
}

pub fn check_tag(out: &PrfOutput) -> [u8; CHECK_LEN] {
    let d = Sha256::digest(out.to_bytes());
    d[..CHECK_LEN].try_into().unwrap()
}

pub struct ProxyRecSys {
    paillier: PublicKey,
    predictions: Vec<Ciphertext>,
    config: ProxyConfig,
    setup: Option<SharedSetup>,
    record: Option<ReductionRecord>,
    pub counters: OpCounters,
    r1_rng: ChaCha20Rng,
    r2_rng: ChaCha20Rng,
}

impl ProxyRecSys {
    pub fn new(
        paillier: PublicKey,
        predictions: Vec<Ciphertext>,
        config: ProxyConfig,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        check_guard(&paillier, config.theta, 16)?;
        Ok(Self {
            paillier,
            predictions,
            config,
            setup: None,
            record: None,
            counters: OpCounters::default(),
            r1_rng: derive_rng(seed, "recsys-r1"),
            r2_rng: derive_rng(seed, "reduction-r2"),
        })
    }

    pub fn accept_setup(&mut self, msg: &SetupSeed) {
        self.setup = Some(SharedSetup::from_seed(
            msg.0,
            self.predictions.len(),
            self.config.thresholds.len(),
        ));
    }

    pub fn reduction(&mut self) -> Result<ReduceMasked, ProtocolError> {
        let m = self.predictions.len();
        let theta = self.config.theta;
        let record = sample_masks(m, theta, &mut self.r1_rng, &mut self.r2_rng);
        let deltas = self
            .predictions
            .iter()
            .zip(&record.entries)
            .map(|(ct, e)| mask_for_reduction(&self.paillier, ct, e, theta, MaskSign::Minus))
            .collect::<Result<Vec<_>, _>>()?;
        self.counters.paillier_add += m as u64;
        self.record = Some(record);
        Ok(ReduceMasked { deltas })
    }

    /// `γ_j = γ'_j + r_j1`, then one PRF share per item in proxy order.
    pub fn prf_shares(&mut self, msg: &GammaShares) -> Result<PrfShares, ProtocolError> {
        let record = self
            .record
            .take()
            .ok_or_else(|| ProtocolError::Unexpected("gamma shares before reduction".into()))?;
        let setup = self
            .setup
            .as_ref()
            .ok_or_else(|| ProtocolError::Unexpected("gamma shares before setup".into()))?;
        let m = record.entries.len();
        if msg.gammas.len() != m {
            return Err(ProtocolError::LengthMismatch {
                expected: m,
                got: msg.gammas.len(),
            });
        }
        let inputs = setup.inputs();
        let shares = setup
            .order
            .iter()
            .map(|&j| {
                let gamma = msg.gammas[j]
                    .checked_add(record.entries[j].r1 as i128)
                    .ok_or_else(|| ProtocolError::Malformed("gamma overflow".into()))?;
                Ok(inputs[j].eval(&PrfKey::from_int(gamma)))
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        self.counters.prf_eval += m as u64;
        Ok(PrfShares { shares })
    }
}

pub struct ProxyUser {
    paillier: SecretKey,
    rated: Vec<bool>,
    config: ProxyConfig,
    setup: SharedSetup,
    keys: Vec<PrfKey>,
    r3: Vec<u128>,
    pub counters: OpCounters,
    rng: ChaCha20Rng,
    pub betas: Vec<Integer>,
}

impl ProxyUser {
    pub fn new(paillier: SecretKey, rated: Vec<bool>, config: ProxyConfig, seed: u64) -> Self {
        let mut rng = derive_rng(seed, "user-proxy");
        let mut setup_seed = [0u8; 32];
        rng.fill_bytes(&mut setup_seed);
        let m = rated.len();
        let keys = (0..m).map(|_| PrfKey::random(&mut rng)).collect();
        Self {
            paillier,
            setup: SharedSetup::from_seed(setup_seed, m, config.thresholds.len()),
            rated,
            config,
            keys,
            r3: Vec::new(),
            counters: OpCounters::default(),
            rng,
            betas: Vec::new(),
        }
    }

    pub fn setup(&self) -> &SharedSetup {
        &self.setup
    }

    pub fn setup_message(&self) -> SetupSeed {
        SetupSeed(self.setup.seed)
    }

    pub fn reply(&mut self, msg: &ReduceMasked) -> Result<GammaShares, ProtocolError> {
        let m = self.rated.len();
        if msg.deltas.len() != m {
            return Err(ProtocolError::LengthMismatch {
                expected: m,
                got: msg.deltas.len(),
            });
        }
        let theta = self.config.theta;
        let bound = alpha_bound(theta);
        let l = lift();
        self.betas.clear();
        self.r3.clear();
        let mut gammas = Vec::with_capacity(m);
        for (j, delta) in msg.deltas.iter().enumerate() {
            let alpha = self.paillier.decrypt_signed(delta)?;
            self.counters.paillier_dec += 1;
            if Integer::from(alpha.abs_ref()) > bound {
                return Err(ProtocolError::SizeAnomaly { item: j });
            }
            let beta = unmask_round(&alpha, theta);
            let r3 = random_u128_bits(&mut self.rng, R3_BITS);
            let g = if self.rated[j] {
                r3 as i128
            } else {
                let shifted = Integer::from(&beta - &l).to_i128().expect("bounded by alpha check");
                r3 as i128 + shifted
            };
            self.betas.push(beta);
            self.r3.push(r3);
            gammas.push(g);
        }
        Ok(GammaShares { gammas })
    }

    /// `Υ_j = F(K_j − r_j3, R_j)` in proxy order, plus the shuffled tags.
    pub fn prf_shares(&mut self) -> Result<(PrfShares, CheckValues), ProtocolError> {
        let m = self.rated.len();
        if self.r3.len() != m {
            return Err(ProtocolError::Unexpected("prf shares before reply".into()));
        }
        let inputs = self.setup.inputs();
        let values = self.config.thresholds.values();
        let mut shares = Vec::with_capacity(m);
        let mut tags = Vec::with_capacity(m * values.len());
        for &j in &self.setup.order {
            let key = self.keys[j].key_sub(self.r3[j] as i128);
            shares.push(inputs[j].eval(&key));
            tags.extend(self.setup.inner[j].iter().map(|&x| {
                check_tag(&inputs[j].eval(&self.keys[j].key_add(values[x] as i128)))
            }));
        }
        self.counters.prf_eval += (m * (1 + values.len())) as u64;
        Ok((
            PrfShares { shares },
            CheckValues {
                per_item: values.len() as u8,
                tags,
            },
        ))
    }

    pub fn interpret(&mut self, msg: &MatchResult) -> Result<BTreeSet<usize>, ProtocolError> {
        let m = self.rated.len();
        if msg.bits.len() != m {
            return Err(ProtocolError::LengthMismatch {
                expected: m,
                got: msg.bits.len(),
            });
        }
        Ok(self
            .setup
            .order
            .iter()
            .zip(&msg.bits)
            .filter(|&(&j, &b)| b && !self.rated[j])
            .map(|(&j, _)| j)
            .collect())
    }
}

/// Collects the three inputs in any order and matches once all are in.
#[derive(Default)]
pub struct Proxy {
    user: Option<PrfShares>,
    recsys: Option<PrfShares>,
    checks: Option<CheckValues>,
    pub counters: OpCounters,
}

impl Proxy {
    pub fn accept_user(&mut self, msg: PrfShares) -> Result<Option<MatchResult>, ProtocolError> {
        Self::put(&mut self.user, msg)?;
        self.try_match()
    }

    pub fn accept_recsys(&mut self, msg: PrfShares) -> Result<Option<MatchResult>, ProtocolError> {
        Self::put(&mut self.recsys, msg)?;
        self.try_match()
    }

    pub fn accept_checks(&mut self, msg: CheckValues) -> Result<Option<MatchResult>, ProtocolError> {
        Self::put(&mut self.checks, msg)?;
        self.try_match()
    }

    fn put<T>(slot: &mut Option<T>, msg: T) -> Result<(), ProtocolError> {
        if slot.is_some() {
            return Err(ProtocolError::Unexpected("duplicate message to proxy".into()));
        }
        *slot = Some(msg);
        Ok(())
    }

    fn try_match(&mut self) -> Result<Option<MatchResult>, ProtocolError> {
        let (Some(u), Some(r), Some(c)) = (&self.user, &self.recsys, &self.checks) else {
            return Ok(None);
        };
        let m = u.shares.len();
        if r.shares.len() != m {
            return Err(ProtocolError::LengthMismatch {
                expected: m,
                got: r.shares.len(),
            });
        }
        let t = c.per_item as usize;
        if c.tags.len() != m * t {
            return Err(ProtocolError::LengthMismatch {
                expected: m * t,
                got: c.tags.len(),
            });
        }
        let bits = (0..m)
            .map(|p| {
                let tag = check_tag(&combine(&u.shares[p], &r.shares[p]));
                c.tags[p * t..(p + 1) * t].contains(&tag)
            })
            .collect();
        self.counters.prf_hadd += m as u64;
        self.user = None;
        self.recsys = None;
        self.checks = None;
        Ok(Some(MatchResult { bits }))
    }
}
