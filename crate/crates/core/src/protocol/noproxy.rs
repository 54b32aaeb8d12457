//! Two-party protocol: Paillier-based reduction, then a membership test
//! evaluated by the recommender under the user's SWHE key.
//!
//! ```text
//! RecSys: Δ_j = ⟦x_j θ + y_j⟧ ⊕ (r_j1 θ + r_j2)                 → User
//! User:   β_j = ⌊Dec(Δ_j)/θ⌋ = x_j + r_j1 + ε_j
//!         Γ_j = Enc'(β_j) if unrated, Enc'(r_j3) otherwise        → RecSys
//! RecSys: Φ_j = Γ_j ⊖ r_j1;  Ψ_j = RAND(Π_x (Φ_j ⊖ V_x))           → User
//! User:   { j unrated : Dec'(Ψ_j) = 0 }
//! ```
//!
//! With batching, item `j` sits in slot `j mod n` of ciphertext `⌊j/n⌋`.

use std::collections::BTreeSet;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use rug::Integer;

use super::codec::{Reader, Writer};
use super::{
    alpha_bound, check_guard, mask_for_reduction, sample_masks, unmask_round, MaskSign,
    ProtocolError, ReductionRecord, ThresholdSet, LAMBDA,
};
use crate::counters::OpCounters;
use crate::paillier::{Ciphertext, PublicKey, SecretKey};
use crate::rng::{derive_rng, random_u128_bits};
use crate::swhe::{SlotVector, SwheCiphertext, SwheContext, SwheKeyPair, SwhePublicKey};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoProxyConfig {
    pub theta: u64,
    pub thresholds: ThresholdSet,
    /// Pack items into slots; otherwise one ciphertext per item.
    pub batched: bool,
}

/// REDUCE_MASKED
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReduceMasked {
    pub deltas: Vec<Ciphertext>,
}

/// REDUCE_REPLY
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReduceReply {
    pub gammas: Vec<SwheCiphertext>,
}

/// EVAL_RESULT
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalResult {
    pub psis: Vec<SwheCiphertext>,
}

impl ReduceMasked {
    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u32(self.deltas.len() as u32);
        for c in &self.deltas {
            w.bytes(&c.to_bytes());
        }
        w.buf
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let n = r.count(10)?;
        let mut deltas = Vec::with_capacity(n);
        for _ in 0..n {
            let (c, used) = Ciphertext::from_bytes(r.rest())?;
            r.advance(used);
            deltas.push(c);
        }
        r.finish()?;
        Ok(Self { deltas })
    }
}

fn swhe_list_payload(list: &[SwheCiphertext]) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(list.len() as u32);
    for c in list {
        w.bytes(&c.to_bytes());
    }
    w.buf
}

fn swhe_list_parse(ctx: &SwheContext, bytes: &[u8]) -> Result<Vec<SwheCiphertext>, ProtocolError> {
    let mut r = Reader::new(bytes);
    let n = r.count(20)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (c, used) = SwheCiphertext::from_bytes(ctx, r.rest())?;
        r.advance(used);
        out.push(c);
    }
    r.finish()?;
    Ok(out)
}

impl ReduceReply {
    pub fn to_payload(&self) -> Vec<u8> {
        swhe_list_payload(&self.gammas)
    }

    pub fn from_payload(ctx: &SwheContext, bytes: &[u8]) -> Result<Self, ProtocolError> {
        Ok(Self {
            gammas: swhe_list_parse(ctx, bytes)?,
        })
    }
}

impl EvalResult {
    pub fn to_payload(&self) -> Vec<u8> {
        swhe_list_payload(&self.psis)
    }

    pub fn from_payload(ctx: &SwheContext, bytes: &[u8]) -> Result<Self, ProtocolError> {
        Ok(Self {
            psis: swhe_list_parse(ctx, bytes)?,
        })
    }
}

/// Items per ciphertext, in item order.
fn layout(m: usize, slots: usize, batched: bool) -> Vec<std::ops::Range<usize>> {
    let per = if batched { slots } else { 1 };
    (0..m.div_ceil(per))
        .map(|c| c * per..((c + 1) * per).min(m))
        .collect()
}

pub struct NoProxyRecSys {
    paillier: PublicKey,
    swhe: SwhePublicKey,
    predictions: Vec<Ciphertext>,
    config: NoProxyConfig,
    record: Option<ReductionRecord>,
    pub counters: OpCounters,
    r1_rng: ChaCha20Rng,
    r2_rng: ChaCha20Rng,
    rand_rng: ChaCha20Rng,
}

impl NoProxyRecSys {
    /// `predictions[j]` encrypts `x_j θ + y_j` under the user's key.
    pub fn new(
        paillier: PublicKey,
        swhe: SwhePublicKey,
        predictions: Vec<Ciphertext>,
        config: NoProxyConfig,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        check_guard(&paillier, config.theta, 16)?;
        Ok(Self {
            paillier,
            swhe,
            predictions,
            config,
            record: None,
            counters: OpCounters::default(),
            r1_rng: derive_rng(seed, "recsys-r1"),
            r2_rng: derive_rng(seed, "reduction-r2"),
            rand_rng: derive_rng(seed, "recsys-rand"),
        })
    }

    pub fn num_items(&self) -> usize {
        self.predictions.len()
    }

    /// Masks the reductions per item; keeps the masks.
    pub fn reduction(&mut self) -> Result<ReduceMasked, ProtocolError> {
        let m = self.predictions.len();
        let theta = self.config.theta;
        let record = sample_masks(m, theta, &mut self.r1_rng, &mut self.r2_rng);
        let deltas = self
            .predictions
            .iter()
            .zip(&record.entries)
            .map(|(ct, e)| mask_for_reduction(&self.paillier, ct, e, theta, MaskSign::Plus))
            .collect::<Result<Vec<_>, _>>()?;
        self.counters.paillier_add += m as u64;
        self.record = Some(record);
        Ok(ReduceMasked { deltas })
    }

    pub fn evaluate(&mut self, reply: &ReduceReply) -> Result<EvalResult, ProtocolError> {
        let record = self
            .record
            .take()
            .ok_or_else(|| ProtocolError::Unexpected("reply before reduction".into()))?;
        let ctx = self.swhe.context().clone();
        let params = ctx.params();
        let groups = layout(record.entries.len(), ctx.slots(), self.config.batched);
        if reply.gammas.len() != groups.len() {
            return Err(ProtocolError::LengthMismatch {
                expected: groups.len(),
                got: reply.gammas.len(),
            });
        }
        let [p1, p2] = params.plain_primes;
        let mut psis = Vec::with_capacity(groups.len());
        for (gamma, items) in reply.gammas.iter().zip(groups) {
            let active = items.len() as u64;
            let mut r1 = SlotVector::zeros(params);
            for (slot, j) in items.clone().enumerate() {
                r1.set(slot, record.entries[j].r1 as u128);
            }
            let phi = self.swhe.sub_plain(gamma, &r1)?;
            let mut factors = Vec::with_capacity(self.config.thresholds.len());
            for &v in self.config.thresholds.values() {
                let mut vv = SlotVector::zeros(params);
                for slot in 0..items.len() {
                    vv.set_signed(slot, v as i128);
                }
                factors.push(self.swhe.sub_plain(&phi, &vv)?);
            }
            let t = factors.len() as u64;
            self.counters.swhe_add += active * (t + 1);
            self.counters.swhe_ct.add += t + 1;

            // pairwise product tree: T - 1 multiplications, depth ⌈log2 T⌉
            while factors.len() > 1 {
                let mut next = Vec::with_capacity(factors.len().div_ceil(2));
                let mut it = factors.into_iter();
                while let Some(a) = it.next() {
                    match it.next() {
                        Some(b) => {
                            next.push(self.swhe.mul(&a, &b)?);
                            self.counters.swhe_mul += active;
                            self.counters.swhe_ct.mul += 1;
                        }
                        None => next.push(a),
                    }
                }
                factors = next;
            }
            let omega = factors.pop().expect("at least one threshold");

            // RAND: multiply by units mod both primes
            let mut rand = SlotVector::zeros(params);
            for slot in 0..ctx.slots() {
                let a = 1 + self.rand_rng.next_u64() % (p1 - 1);
                let b = 1 + self.rand_rng.next_u64() % (p2 - 1);
                rand.set_residues(slot, a, b);
            }
            psis.push(self.swhe.mul_plain(&omega, &rand)?);
            self.counters.swhe_mul_plain += active;
            self.counters.swhe_ct.mul_plain += 1;
        }
        Ok(EvalResult { psis })
    }
}

pub struct NoProxyUser {
    paillier: SecretKey,
    swhe: SwheKeyPair,
    rated: Vec<bool>,
    config: NoProxyConfig,
    pub counters: OpCounters,
    rng: ChaCha20Rng,
    /// Decrypted `β_j`, kept for inspection by tests.
    pub betas: Vec<Integer>,
}

impl NoProxyUser {
    pub fn new(
        paillier: SecretKey,
        swhe: SwheKeyPair,
        rated: Vec<bool>,
        config: NoProxyConfig,
        seed: u64,
    ) -> Self {
        Self {
            paillier,
            swhe,
            rated,
            config,
            counters: OpCounters::default(),
            rng: derive_rng(seed, "user-noproxy"),
            betas: Vec::new(),
        }
    }

    pub fn swhe_public(&self) -> &SwhePublicKey {
        &self.swhe.public
    }

    pub fn reply(&mut self, msg: &ReduceMasked) -> Result<ReduceReply, ProtocolError> {
        let m = self.rated.len();
        if msg.deltas.len() != m {
            return Err(ProtocolError::LengthMismatch {
                expected: m,
                got: msg.deltas.len(),
            });
        }
        let theta = self.config.theta;
        let bound = alpha_bound(theta);
        let mut values = Vec::with_capacity(m);
        self.betas.clear();
        for (j, delta) in msg.deltas.iter().enumerate() {
            let alpha = self.paillier.decrypt_signed(delta)?;
            self.counters.paillier_dec += 1;
            if Integer::from(alpha.abs_ref()) > bound {
                return Err(ProtocolError::SizeAnomaly { item: j });
            }
            let beta = unmask_round(&alpha, theta);
            let v = if self.rated[j] {
                random_u128_bits(&mut self.rng, LAMBDA) as i128
            } else {
                beta.to_i128().expect("bounded by alpha check")
            };
            self.betas.push(beta);
            values.push(v);
        }

        let pk = &self.swhe.public;
        let ctx = pk.context().clone();
        let groups = layout(m, ctx.slots(), self.config.batched);
        let mut gammas = Vec::with_capacity(groups.len());
        for items in groups {
            let mut sv = SlotVector::zeros(ctx.params());
            for (slot, j) in items.enumerate() {
                sv.set_signed(slot, values[j]);
            }
            gammas.push(pk.encrypt(&sv, &mut self.rng)?);
            self.counters.swhe_ct.enc += 1;
        }
        self.counters.swhe_enc += m as u64;
        Ok(ReduceReply { gammas })
    }

    pub fn select(&mut self, msg: &EvalResult) -> Result<BTreeSet<usize>, ProtocolError> {
        let m = self.rated.len();
        let ctx = self.swhe.public.context().clone();
        let groups = layout(m, ctx.slots(), self.config.batched);
        if msg.psis.len() != groups.len() {
            return Err(ProtocolError::LengthMismatch {
                expected: groups.len(),
                got: msg.psis.len(),
            });
        }
        let mut out = BTreeSet::new();
        for (psi, items) in msg.psis.iter().zip(groups) {
            let plain = self.swhe.secret.decrypt(psi)?;
            self.counters.swhe_dec += 1;
            self.counters.swhe_ct.dec += 1;
            for (slot, j) in items.enumerate() {
                if !self.rated[j] && plain.is_zero(slot) {
                    out.insert(j);
                }
            }
        }
        Ok(out)
    }

    /// Decrypts a reply ciphertext; test helper for checking `Γ`.
    pub fn decrypt_swhe(&self, c: &SwheCiphertext) -> Result<SlotVector, ProtocolError> {
        Ok(self.swhe.secret.decrypt(c)?)
    }
}
