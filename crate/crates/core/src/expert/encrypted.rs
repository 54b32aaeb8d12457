//! Linear evaluation of the external prediction under the user's Paillier
//! key, using only ciphertext additions, plaintext additions and scalar
//! multiplications.
//!
//! `A` and `Q` are quantized separately (`A' = round(A·s_a)`,
//! `q'_j = round(q_j·s_q)`), so the result is the prediction at scale
//! `s_a·s_q`. The user's mean and the item constants are encoded at the
//! same scale.

use rand::RngCore;
use rug::Integer;

use super::{ExpertError, ExpertModel};
use crate::counters::OpCounters;
use crate::paillier::{Ciphertext, PublicKey, SecretKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncryptedScaling {
    pub a_scale: u64,
    pub q_scale: u64,
}

impl Default for EncryptedScaling {
    fn default() -> Self {
        Self {
            a_scale: 100_000_000,
            q_scale: 100_000_000,
        }
    }
}

impl EncryptedScaling {
    /// Scale of the decrypted prediction.
    pub fn total(&self) -> Integer {
        Integer::from(self.a_scale) * self.q_scale
    }
}

/// Rounds `v·scale` to an integer without losing the integer part to
/// `f64` precision.
pub(crate) fn scale_round(v: f64, scale: &Integer) -> Integer {
    let s = scale.to_f64();
    let whole = v.trunc();
    let frac = v - whole;
    let mut out = Integer::from_f64(whole).expect("finite") * scale;
    out += Integer::from_f64((frac * s).round()).expect("finite");
    out
}

#[derive(Debug, Clone)]
pub struct EncryptedProfile {
    /// One ciphertext per item, zero for unrated.
    pub ratings: Vec<Ciphertext>,
    /// Mean rating at scale [`EncryptedScaling::total`].
    pub mean: Ciphertext,
}

/// User side: encrypts the full rating row and the scaled mean.
pub fn encrypt_profile<R: RngCore + ?Sized>(
    sk: &SecretKey,
    ratings: &[u8],
    mean: f64,
    scaling: EncryptedScaling,
    rng: &mut R,
    counters: &mut OpCounters,
) -> Result<EncryptedProfile, ExpertError> {
    let enc = ratings
        .iter()
        .map(|&r| sk.encrypt(&Integer::from(r), rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = sk.encrypt_signed(&scale_round(mean, &scaling.total()), rng)?;
    counters.paillier_enc += ratings.len() as u64 + 1;
    Ok(EncryptedProfile { ratings: enc, mean })
}

impl ExpertModel {
    /// Quantized `A'` and `Q'`.
    pub fn quantized_factors(&self, scaling: EncryptedScaling) -> (Vec<Integer>, Vec<Integer>) {
        let sa = Integer::from(scaling.a_scale);
        let sq = Integer::from(scaling.q_scale);
        (
            self.a.iter().map(|&x| scale_round(x, &sa)).collect(),
            self.q.iter().map(|&x| scale_round(x, &sq)).collect(),
        )
    }

    /// Encrypted predictions for `items`, each decrypting to
    /// `≈ prediction · scaling.total()` (centered mod n).
    pub fn encrypted_predict(
        &self,
        pk: &PublicKey,
        profile: &EncryptedProfile,
        items: &[usize],
        scaling: EncryptedScaling,
        counters: &mut OpCounters,
    ) -> Result<Vec<Ciphertext>, ExpertError> {
        let m = self.num_items();
        if profile.ratings.len() != m {
            return Err(ExpertError::DimensionMismatch {
                expected: m,
                got: profile.ratings.len(),
            });
        }
        if let Some(&j) = items.iter().find(|&&j| j >= m) {
            return Err(ExpertError::UnknownItem(j));
        }
        let k = self.k;
        let total = scaling.total();
        let (a_q, q_q) = self.quantized_factors(scaling);

        // worst case |value| with ratings ≤ r_max, compared against n/4
        let r_max = Integer::from(self.experts.r_max());
        let mut u_bound = vec![Integer::new(); k];
        for l in 0..m {
            for c in 0..k {
                u_bound[c] += Integer::from(a_q[l * k + c].abs_ref()) * &r_max;
            }
        }
        let quarter_n = Integer::from(pk.n() >> 2u32);
        let mut max_bound = Integer::new();
        let constants: Vec<Integer> = items
            .iter()
            .map(|&j| scale_round(self.item_constant(j), &total))
            .collect();
        for (&j, cj) in items.iter().zip(&constants) {
            let mut b = Integer::from(cj.abs_ref()) + Integer::from(&total * &r_max);
            for c in 0..k {
                b += Integer::from(q_q[j * k + c].abs_ref()) * &u_bound[c];
            }
            if b > max_bound {
                max_bound = b;
            }
        }
        if max_bound >= quarter_n {
            return Err(ExpertError::ScalingOverflow);
        }

        // ⟦u⟧ = ⟦R_i⟧ A'
        let mut u: Vec<Option<Ciphertext>> = vec![None; k];
        for l in 0..m {
            for c in 0..k {
                let term = pk.scalar_mul_signed(&profile.ratings[l], &a_q[l * k + c])?;
                counters.paillier_scalar_mul += 1;
                u[c] = Some(match u[c].take() {
                    None => term,
                    Some(acc) => {
                        counters.paillier_add += 1;
                        pk.add(&acc, &term)?
                    }
                });
            }
        }

        let mut out = Vec::with_capacity(items.len());
        for (&j, cj) in items.iter().zip(&constants) {
            let mut acc = pk.add_plain_signed(&profile.mean, cj)?;
            counters.paillier_add += 1;
            for (c, uc) in u.iter().enumerate() {
                if let Some(uc) = uc {
                    let term = pk.scalar_mul_signed(uc, &q_q[j * k + c])?;
                    acc = pk.add(&acc, &term)?;
                    counters.paillier_scalar_mul += 1;
                    counters.paillier_add += 1;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }
}
