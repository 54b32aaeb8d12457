//! BFV over `Z_Q[x]/(x^n + 1)` with one word-size plaintext prime.
//!
//! `Q` is an RNS product of NTT primes. Ciphertext multiplication lifts the
//! operands exactly into `Q·P` (with `P > n·Q`), tensors there and rescales
//! by `t/Q` with big-integer rounding. Relinearization uses a base-`2^w`
//! gadget over the full modulus.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use rug::ops::DivRounding;
use rug::Integer;

use super::arith::{Modulus, NttTable};
use super::rns::{BaseConverter, RnsBasis};

pub(crate) const GADGET_BITS: u32 = 32;

#[derive(Debug, Clone)]
pub(crate) struct BfvContext {
    pub n: usize,
    pub t: Modulus,
    pub t_ntt: NttTable,
    pub q: RnsBasis,
    pub qp: RnsBasis,
    q_to_p: BaseConverter,
    delta: Vec<u64>,
    q_mod_t: u64,
    t_int: Integer,
    pub gadget_count: usize,
    gadget_pow: Vec<Vec<u64>>,
    sigma: f64,
}

/// Polynomial with `k` residue rows of `n` coefficients each.
pub(crate) type Poly = Vec<u64>;

#[derive(Debug, Clone)]
pub(crate) struct SecretKey {
    s_ntt: Poly,
    s2_ntt: Poly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct PublicKey {
    pub b_ntt: Poly,
    pub a_ntt: Poly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RelinKey {
    pub parts: Vec<(Poly, Poly)>,
}

/// Components in coefficient form over `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Ciphertext {
    pub parts: Vec<Poly>,
}

impl BfvContext {
    pub fn new(n: usize, t: u64, q_primes: &[u64], p_primes: &[u64], sigma: f64) -> Option<Self> {
        let t_ntt = NttTable::new(t, n)?;
        let q = RnsBasis::new(q_primes, n)?;
        let mut all = q_primes.to_vec();
        all.extend_from_slice(p_primes);
        let qp = RnsBasis::new(&all, n)?;
        let p_moduli: Vec<Modulus> = p_primes.iter().map(|&p| Modulus::new(p)).collect();
        let q_to_p = BaseConverter::new(&q, &p_moduli);
        let t_int = Integer::from(t);
        let delta_int = Integer::from(q.product() / &t_int);
        let delta = q
            .moduli
            .iter()
            .map(|m| Integer::from(&delta_int % m.value()).to_u64().unwrap())
            .collect();
        let q_mod_t = Integer::from(q.product() % &t_int).to_u64().unwrap();
        let q_bits = q.product().significant_bits();
        let gadget_count = q_bits.div_ceil(GADGET_BITS) as usize;
        let gadget_pow = (0..gadget_count)
            .map(|i| {
                let w = Integer::from(1) << (GADGET_BITS * i as u32);
                q.moduli
                    .iter()
                    .map(|m| Integer::from(&w % m.value()).to_u64().unwrap())
                    .collect()
            })
            .collect();
        Some(Self {
            n,
            t: Modulus::new(t),
            t_ntt,
            q,
            qp,
            q_to_p,
            delta,
            q_mod_t,
            t_int,
            gadget_count,
            gadget_pow,
            sigma,
        })
    }

    fn k(&self) -> usize {
        self.q.len()
    }

    pub fn q_bits(&self) -> u32 {
        self.q.product().significant_bits()
    }

    // --- sampling -------------------------------------------------------

    fn signed_to_poly(&self, basis: &RnsBasis, coeffs: &[i64]) -> Poly {
        let n = self.n;
        let mut out = vec![0u64; basis.len() * n];
        for (i, m) in basis.moduli.iter().enumerate() {
            for (j, &c) in coeffs.iter().enumerate() {
                out[i * n + j] = m.reduce_i64(c);
            }
        }
        out
    }

    fn sample_ternary<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.n)
            .map(|_| (rng.next_u32() % 3) as i64 - 1)
            .collect()
    }

    fn sample_error<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let normal = Normal::new(0.0, self.sigma).expect("valid sigma");
        let bound = (6.0 * self.sigma).ceil();
        (0..self.n)
            .map(|_| normal.sample(rng).round().clamp(-bound, bound) as i64)
            .collect()
    }

    fn sample_uniform<R: RngCore + ?Sized>(&self, rng: &mut R) -> Poly {
        let n = self.n;
        let mut out = vec![0u64; self.k() * n];
        for (i, m) in self.q.moduli.iter().enumerate() {
            let p = m.value();
            let zone = u64::MAX - u64::MAX % p;
            for x in &mut out[i * n..(i + 1) * n] {
                *x = loop {
                    let r = rng.next_u64();
                    if r < zone {
                        break r % p;
                    }
                };
            }
        }
        out
    }

    // --- polynomial helpers over a basis --------------------------------

    fn ntt_forward(&self, basis: &RnsBasis, p: &mut Poly) {
        for (i, table) in basis.ntt.iter().enumerate() {
            table.forward(&mut p[i * self.n..(i + 1) * self.n]);
        }
    }

    fn ntt_inverse(&self, basis: &RnsBasis, p: &mut Poly) {
        for (i, table) in basis.ntt.iter().enumerate() {
            table.inverse(&mut p[i * self.n..(i + 1) * self.n]);
        }
    }

    fn pointwise(&self, basis: &RnsBasis, a: &Poly, b: &Poly) -> Poly {
        let n = self.n;
        let mut out = vec![0u64; basis.len() * n];
        for (i, m) in basis.moduli.iter().enumerate() {
            for j in i * n..(i + 1) * n {
                out[j] = m.mul(a[j], b[j]);
            }
        }
        out
    }

    fn pointwise_acc(&self, basis: &RnsBasis, acc: &mut Poly, a: &Poly, b: &Poly) {
        let n = self.n;
        for (i, m) in basis.moduli.iter().enumerate() {
            for j in i * n..(i + 1) * n {
                acc[j] = m.add(acc[j], m.mul(a[j], b[j]));
            }
        }
    }

    fn add_into(&self, basis: &RnsBasis, acc: &mut Poly, b: &Poly) {
        let n = self.n;
        for (i, m) in basis.moduli.iter().enumerate() {
            for j in i * n..(i + 1) * n {
                acc[j] = m.add(acc[j], b[j]);
            }
        }
    }

    fn sub_into(&self, basis: &RnsBasis, acc: &mut Poly, b: &Poly) {
        let n = self.n;
        for (i, m) in basis.moduli.iter().enumerate() {
            for j in i * n..(i + 1) * n {
                acc[j] = m.sub(acc[j], b[j]);
            }
        }
    }

    fn negate(&self, basis: &RnsBasis, p: &mut Poly) {
        let n = self.n;
        for (i, m) in basis.moduli.iter().enumerate() {
            for x in &mut p[i * n..(i + 1) * n] {
                *x = m.neg(*x);
            }
        }
    }

    /// `round(Q·m/t)` over `Q` for a plaintext with coefficients in `[0, t)`,
    /// computed as `Δ·m + round((Q mod t)·m / t)`.
    fn scaled_plain(&self, m: &[u64]) -> Poly {
        let n = self.n;
        let t = self.t.value() as u128;
        let carry: Vec<u64> = m
            .iter()
            .map(|&c| ((self.q_mod_t as u128 * c as u128 + t / 2) / t) as u64)
            .collect();
        let mut out = vec![0u64; self.k() * n];
        for (i, q) in self.q.moduli.iter().enumerate() {
            let d = self.delta[i];
            let ds = q.shoup(d);
            for j in 0..n {
                out[i * n + j] = q.add(q.mul_shoup(m[j] % q.value(), d, ds), carry[j] % q.value());
            }
        }
        out
    }

    // --- keys -----------------------------------------------------------

    pub fn keygen<R: RngCore + ?Sized>(&self, rng: &mut R) -> (SecretKey, PublicKey, RelinKey) {
        let s = self.sample_ternary(rng);
        let mut s_ntt = self.signed_to_poly(&self.q, &s);
        self.ntt_forward(&self.q, &mut s_ntt);
        let s2_ntt = self.pointwise(&self.q, &s_ntt, &s_ntt);

        let a_ntt = self.sample_uniform(rng);
        let mut e = self.signed_to_poly(&self.q, &self.sample_error(rng));
        self.ntt_forward(&self.q, &mut e);
        let mut b_ntt = self.pointwise(&self.q, &a_ntt, &s_ntt);
        self.add_into(&self.q, &mut b_ntt, &e);
        self.negate(&self.q, &mut b_ntt);

        let n = self.n;
        let parts = (0..self.gadget_count)
            .map(|d| {
                let a = self.sample_uniform(rng);
                let mut e = self.signed_to_poly(&self.q, &self.sample_error(rng));
                self.ntt_forward(&self.q, &mut e);
                let mut k0 = self.pointwise(&self.q, &a, &s_ntt);
                self.add_into(&self.q, &mut k0, &e);
                self.negate(&self.q, &mut k0);
                for (i, m) in self.q.moduli.iter().enumerate() {
                    let w = self.gadget_pow[d][i];
                    for j in i * n..(i + 1) * n {
                        k0[j] = m.add(k0[j], m.mul(w, s2_ntt[j]));
                    }
                }
                (k0, a)
            })
            .collect();
        (
            SecretKey { s_ntt, s2_ntt },
            PublicKey { b_ntt, a_ntt },
            RelinKey { parts },
        )
    }

    // --- encryption -----------------------------------------------------

    pub fn encrypt<R: RngCore + ?Sized>(&self, pk: &PublicKey, m: &[u64], rng: &mut R) -> Ciphertext {
        let mut u = self.signed_to_poly(&self.q, &self.sample_ternary(rng));
        self.ntt_forward(&self.q, &mut u);
        let mut c0 = self.pointwise(&self.q, &pk.b_ntt, &u);
        let mut c1 = self.pointwise(&self.q, &pk.a_ntt, &u);
        self.ntt_inverse(&self.q, &mut c0);
        self.ntt_inverse(&self.q, &mut c1);
        let e1 = self.signed_to_poly(&self.q, &self.sample_error(rng));
        let e2 = self.signed_to_poly(&self.q, &self.sample_error(rng));
        self.add_into(&self.q, &mut c0, &e1);
        self.add_into(&self.q, &mut c1, &e2);
        self.add_into(&self.q, &mut c0, &self.scaled_plain(m));
        Ciphertext {
            parts: vec![c0, c1],
        }
    }

    /// `c0 + c1·s (+ c2·s²)` over `Q`, coefficient form.
    fn phase(&self, sk: &SecretKey, ct: &Ciphertext) -> Poly {
        let mut acc = ct.parts[0].clone();
        let mut prod = vec![0u64; self.k() * self.n];
        for (idx, part) in ct.parts.iter().enumerate().skip(1) {
            let mut c = part.clone();
            self.ntt_forward(&self.q, &mut c);
            let key = if idx == 1 { &sk.s_ntt } else { &sk.s2_ntt };
            let p = self.pointwise(&self.q, &c, key);
            if idx == 1 {
                prod = p;
            } else {
                self.add_into(&self.q, &mut prod, &p);
            }
        }
        self.ntt_inverse(&self.q, &mut prod);
        self.add_into(&self.q, &mut acc, &prod);
        acc
    }

    fn coeff_residues(&self, basis: &RnsBasis, p: &Poly, j: usize, out: &mut [u64]) {
        for i in 0..basis.len() {
            out[i] = p[i * self.n + j];
        }
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Vec<u64> {
        let phase = self.phase(sk, ct);
        let q = self.q.product();
        let two_q = Integer::from(q << 1u32);
        let mut res = vec![0u64; self.k()];
        let mut x = Integer::new();
        (0..self.n)
            .map(|j| {
                self.coeff_residues(&self.q, &phase, j, &mut res);
                self.q.reconstruct_centered(&res, &mut x);
                // round(t x / Q) = floor((2 t x + Q) / 2Q)
                let mut num = Integer::from(&x * &self.t_int);
                num <<= 1u32;
                num += q;
                let r = num.div_floor(&two_q);
                let r = r % &self.t_int;
                let r = if r < 0 { r + &self.t_int } else { r };
                r.to_u64().unwrap()
            })
            .collect()
    }

    /// Remaining noise budget in bits; zero or negative means decryption
    /// is no longer reliable.
    pub fn noise_budget(&self, sk: &SecretKey, ct: &Ciphertext) -> i64 {
        let phase = self.phase(sk, ct);
        let q = self.q.product();
        let two_q = Integer::from(q << 1u32);
        let mut res = vec![0u64; self.k()];
        let mut x = Integer::new();
        let mut worst = Integer::new();
        for j in 0..self.n {
            self.coeff_residues(&self.q, &phase, j, &mut res);
            self.q.reconstruct_centered(&res, &mut x);
            // |t x mod Q| (centered) measures the invariant noise
            let tx = Integer::from(&x * &self.t_int);
            let mut num = Integer::from(&tx << 1u32);
            num += q;
            let k = num.div_floor(&two_q);
            let r = tx - k * q;
            let r = r.abs();
            if r > worst {
                worst = r;
            }
        }
        if worst == 0 {
            return self.q_bits() as i64;
        }
        self.q_bits() as i64 - 1 - worst.significant_bits() as i64
    }

    // --- homomorphic operations -----------------------------------------

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        let len = a.parts.len().max(b.parts.len());
        let parts = (0..len)
            .map(|i| match (a.parts.get(i), b.parts.get(i)) {
                (Some(x), Some(y)) => {
                    let mut s = x.clone();
                    self.add_into(&self.q, &mut s, y);
                    s
                }
                (Some(x), None) | (None, Some(x)) => x.clone(),
                (None, None) => unreachable!(),
            })
            .collect();
        Ciphertext { parts }
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        let len = a.parts.len().max(b.parts.len());
        let parts = (0..len)
            .map(|i| {
                let mut s = a
                    .parts
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| vec![0u64; self.k() * self.n]);
                if let Some(y) = b.parts.get(i) {
                    self.sub_into(&self.q, &mut s, y);
                }
                s
            })
            .collect();
        Ciphertext { parts }
    }

    pub fn add_plain(&self, a: &Ciphertext, m: &[u64]) -> Ciphertext {
        let mut out = a.clone();
        self.add_into(&self.q, &mut out.parts[0], &self.scaled_plain(m));
        out
    }

    pub fn sub_plain(&self, a: &Ciphertext, m: &[u64]) -> Ciphertext {
        let mut out = a.clone();
        self.sub_into(&self.q, &mut out.parts[0], &self.scaled_plain(m));
        out
    }

    /// Multiplies by a plaintext polynomial (coefficients centered mod t).
    pub fn mul_plain(&self, a: &Ciphertext, m: &[u64]) -> Ciphertext {
        let centered: Vec<i64> = m.iter().map(|&c| self.t.center(c)).collect();
        let mut mp = self.signed_to_poly(&self.q, &centered);
        self.ntt_forward(&self.q, &mut mp);
        let parts = a
            .parts
            .iter()
            .map(|c| {
                let mut c = c.clone();
                self.ntt_forward(&self.q, &mut c);
                let mut prod = self.pointwise(&self.q, &c, &mp);
                self.ntt_inverse(&self.q, &mut prod);
                prod
            })
            .collect();
        Ciphertext { parts }
    }

    fn lift_to_qp(&self, p: &Poly) -> Poly {
        let n = self.n;
        let kq = self.k();
        let kqp = self.qp.len();
        let mut out = vec![0u64; kqp * n];
        out[..kq * n].copy_from_slice(p);
        let mut res = vec![0u64; kq];
        let mut ext = vec![0u64; kqp - kq];
        for j in 0..n {
            self.coeff_residues(&self.q, p, j, &mut res);
            self.q_to_p.convert_centered(&self.q, &res, &mut ext);
            for (i, &e) in ext.iter().enumerate() {
                out[(kq + i) * n + j] = e;
            }
        }
        out
    }

    /// Ciphertext product of two size-2 ciphertexts, relinearized.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext, rk: &RelinKey) -> Ciphertext {
        assert!(a.parts.len() == 2 && b.parts.len() == 2, "relinearized inputs");
        let qp = &self.qp;
        let lift = |p: &Poly| {
            let mut l = self.lift_to_qp(p);
            self.ntt_forward(qp, &mut l);
            l
        };
        let (a0, a1) = (lift(&a.parts[0]), lift(&a.parts[1]));
        let (b0, b1) = (lift(&b.parts[0]), lift(&b.parts[1]));
        let mut d0 = self.pointwise(qp, &a0, &b0);
        let mut d1 = self.pointwise(qp, &a0, &b1);
        self.pointwise_acc(qp, &mut d1, &a1, &b0);
        let mut d2 = self.pointwise(qp, &a1, &b1);
        for d in [&mut d0, &mut d1, &mut d2] {
            self.ntt_inverse(qp, d);
        }

        let n = self.n;
        let k = self.k();
        let q = self.q.product();
        let two_q = Integer::from(q << 1u32);
        let mut res = vec![0u64; qp.len()];
        let mut x = Integer::new();
        let mut scale = |d: &Poly, digits: Option<&mut Vec<Poly>>| -> Poly {
            let mut out = vec![0u64; k * n];
            let mut digits = digits;
            for j in 0..n {
                self.coeff_residues(qp, d, j, &mut res);
                qp.reconstruct_centered(&res, &mut x);
                let mut num = Integer::from(&x * &self.t_int);
                num <<= 1u32;
                num += q;
                let r = num.div_floor(&two_q);
                let mut rq = [0u64; 16];
                self.q.decompose(&r, &mut rq[..k]);
                for i in 0..k {
                    out[i * n + j] = rq[i];
                }
                if let Some(digits) = digits.as_deref_mut() {
                    let mut u = r % q;
                    if u < 0 {
                        u += q;
                    }
                    for (dj, digit_poly) in digits.iter_mut().enumerate() {
                        let word = Integer::from(&u >> (GADGET_BITS * dj as u32));
                        let low = word.to_u64_wrapping() & ((1u64 << GADGET_BITS) - 1);
                        for i in 0..k {
                            digit_poly[i * n + j] = low;
                        }
                    }
                }
            }
            out
        };
        let c0 = scale(&d0, None);
        let c1 = scale(&d1, None);
        let mut digits = vec![vec![0u64; k * n]; self.gadget_count];
        scale(&d2, Some(&mut digits));

        // relinearize: digits are below 2^w < every q_i, so rows are valid residues
        let mut acc0 = vec![0u64; k * n];
        let mut acc1 = vec![0u64; k * n];
        for (digit, (k0, k1)) in digits.iter_mut().zip(&rk.parts) {
            self.ntt_forward(&self.q, digit);
            self.pointwise_acc(&self.q, &mut acc0, digit, k0);
            self.pointwise_acc(&self.q, &mut acc1, digit, k1);
        }
        self.ntt_inverse(&self.q, &mut acc0);
        self.ntt_inverse(&self.q, &mut acc1);
        self.add_into(&self.q, &mut acc0, &c0);
        self.add_into(&self.q, &mut acc1, &c1);
        Ciphertext {
            parts: vec![acc0, acc1],
        }
    }

    // --- batching -------------------------------------------------------

    /// Slot values mod t to plaintext polynomial coefficients.
    pub fn encode_slots(&self, slots: &[u64]) -> Vec<u64> {
        let mut p = slots.to_vec();
        self.t_ntt.inverse(&mut p);
        p
    }

    pub fn decode_slots(&self, poly: &[u64]) -> Vec<u64> {
        let mut s = poly.to_vec();
        self.t_ntt.forward(&mut s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::super::arith::ntt_primes;
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    fn ctx(n: usize) -> BfvContext {
        let q = ntt_primes(57, 16384, 4, &[]);
        let mut excl = q.clone();
        excl.push(1099511922689);
        let p = ntt_primes(60, 16384, 5, &excl);
        BfvContext::new(n, 1099511922689, &q, &p, 3.2).unwrap()
    }

    #[test]
    fn encrypt_decrypt_and_arith() {
        let c = ctx(256);
        let mut rng = derive_rng(1, "bfv");
        let (sk, pk, rk) = c.keygen(&mut rng);
        let t = c.t.value();
        let a: Vec<u64> = (0..256).map(|_| rng.gen_range(0..t)).collect();
        let b: Vec<u64> = (0..256).map(|_| rng.gen_range(0..t)).collect();
        let ca = c.encrypt(&pk, &c.encode_slots(&a), &mut rng);
        let cb = c.encrypt(&pk, &c.encode_slots(&b), &mut rng);
        assert_eq!(c.decode_slots(&c.decrypt(&sk, &ca)), a);

        let sum = c.decode_slots(&c.decrypt(&sk, &c.add(&ca, &cb)));
        let prod = c.decode_slots(&c.decrypt(&sk, &c.mul(&ca, &cb, &rk)));
        let pm = c.decode_slots(&c.decrypt(&sk, &c.mul_plain(&ca, &c.encode_slots(&b))));
        for i in 0..256 {
            assert_eq!(sum[i], c.t.add(a[i], b[i]));
            assert_eq!(prod[i], c.t.mul(a[i], b[i]));
            assert_eq!(pm[i], c.t.mul(a[i], b[i]));
        }
        let fresh = c.noise_budget(&sk, &ca);
        let after = c.noise_budget(&sk, &c.mul(&ca, &cb, &rk));
        assert!(fresh > after && after > 0, "{fresh} {after}");
    }
}
