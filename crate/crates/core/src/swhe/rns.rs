//! Residue number system over a set of NTT-friendly word primes.

use rug::Integer;

use super::arith::{Modulus, NttTable};

#[derive(Debug, Clone)]
pub struct RnsBasis {
    pub moduli: Vec<Modulus>,
    pub ntt: Vec<NttTable>,
    product: Integer,
    half_product: Integer,
    // B / b_i and its inverse mod b_i
    punctured: Vec<Integer>,
    punctured_inv: Vec<u64>,
    punctured_inv_shoup: Vec<u64>,
    inv_modulus_f64: Vec<f64>,
}

impl RnsBasis {
    pub fn new(primes: &[u64], n: usize) -> Option<Self> {
        let moduli: Vec<Modulus> = primes.iter().map(|&p| Modulus::new(p)).collect();
        let ntt = primes
            .iter()
            .map(|&p| NttTable::new(p, n))
            .collect::<Option<Vec<_>>>()?;
        let product = primes
            .iter()
            .fold(Integer::from(1), |acc, &p| acc * Integer::from(p));
        let half_product = Integer::from(&product >> 1u32);
        let punctured: Vec<Integer> = primes
            .iter()
            .map(|&p| Integer::from(&product / Integer::from(p)))
            .collect();
        let punctured_inv: Vec<u64> = moduli
            .iter()
            .zip(&punctured)
            .map(|(m, pb)| {
                let r = Integer::from(pb % m.value()).to_u64().unwrap();
                m.inv(r)
            })
            .collect();
        let punctured_inv_shoup = moduli
            .iter()
            .zip(&punctured_inv)
            .map(|(m, &w)| m.shoup(w))
            .collect();
        let inv_modulus_f64 = primes.iter().map(|&p| 1.0 / p as f64).collect();
        Some(Self {
            moduli,
            ntt,
            product,
            half_product,
            punctured,
            punctured_inv,
            punctured_inv_shoup,
            inv_modulus_f64,
        })
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn product(&self) -> &Integer {
        &self.product
    }

    // y_i = x_i * (B/b_i)^-1 mod b_i; x = sum y_i (B/b_i) - v B
    #[inline]
    fn y_terms(&self, residues: &[u64], y: &mut [u64]) -> f64 {
        let mut frac = 0.0;
        for i in 0..self.moduli.len() {
            let yi = self.moduli[i].mul_shoup(
                residues[i],
                self.punctured_inv[i],
                self.punctured_inv_shoup[i],
            );
            y[i] = yi;
            frac += yi as f64 * self.inv_modulus_f64[i];
        }
        frac
    }

    /// Exact centered value in `(-B/2, B/2]` of one coefficient.
    pub fn reconstruct_centered(&self, residues: &[u64], out: &mut Integer) {
        let k = self.moduli.len();
        let mut y = [0u64; 16];
        let frac = self.y_terms(residues, &mut y[..k]);
        out.assign_zero();
        for i in 0..k {
            *out += &self.punctured[i] * y[i];
        }
        let v = frac.floor() as u64;
        if v > 0 {
            *out -= &self.product * v;
        }
        // the float estimate can be off by one near integer boundaries
        while *out < 0 {
            *out += &self.product;
        }
        while *out >= self.product {
            *out -= &self.product;
        }
        if *out > self.half_product {
            *out -= &self.product;
        }
    }

    /// Residues of a (possibly negative) integer.
    pub fn decompose(&self, x: &Integer, out: &mut [u64]) {
        let neg = *x < 0;
        let limbs = x.as_limbs();
        for (m, slot) in self.moduli.iter().zip(out.iter_mut()) {
            let p = m.value() as u128;
            let mut r: u128 = 0;
            for &limb in limbs.iter().rev() {
                r = ((r << 64) | limb as u128) % p;
            }
            let r = r as u64;
            *slot = if neg { m.neg(r) } else { r };
        }
    }
}

trait AssignZero {
    fn assign_zero(&mut self);
}

impl AssignZero for Integer {
    #[inline]
    fn assign_zero(&mut self) {
        rug::Assign::assign(self, 0u32);
    }
}

/// Exact conversion of centered values from one basis to another.
#[derive(Debug, Clone)]
pub struct BaseConverter {
    // (B/b_i) mod t_j, row per target modulus
    punctured_mod_target: Vec<Vec<u64>>,
    product_mod_target: Vec<u64>,
    target: Vec<Modulus>,
}

impl BaseConverter {
    pub fn new(source: &RnsBasis, target: &[Modulus]) -> Self {
        let punctured_mod_target = target
            .iter()
            .map(|t| {
                source
                    .punctured
                    .iter()
                    .map(|pb| Integer::from(pb % t.value()).to_u64().unwrap())
                    .collect()
            })
            .collect();
        let product_mod_target = target
            .iter()
            .map(|t| Integer::from(&source.product % t.value()).to_u64().unwrap())
            .collect();
        Self {
            punctured_mod_target,
            product_mod_target,
            target: target.to_vec(),
        }
    }

    /// Converts the centered value of `residues` (in `source`) into residues
    /// modulo each target prime. Falls back to big-integer reconstruction
    /// when the floating-point rounding is ambiguous.
    pub fn convert_centered(&self, source: &RnsBasis, residues: &[u64], out: &mut [u64]) {
        let k = source.len();
        let mut y = [0u64; 16];
        let frac = source.y_terms(residues, &mut y[..k]);
        let v = frac.round();
        if (frac - frac.floor() - 0.5).abs() < 1e-6 {
            let mut x = Integer::new();
            source.reconstruct_centered(residues, &mut x);
            let target_basis_decompose = |x: &Integer, out: &mut [u64]| {
                let neg = *x < 0;
                let limbs = x.as_limbs();
                for (m, slot) in self.target.iter().zip(out.iter_mut()) {
                    let p = m.value() as u128;
                    let mut r: u128 = 0;
                    for &limb in limbs.iter().rev() {
                        r = ((r << 64) | limb as u128) % p;
                    }
                    *slot = if neg { m.neg(r as u64) } else { r as u64 };
                }
            };
            target_basis_decompose(&x, out);
            return;
        }
        let v = v as u64;
        for (j, t) in self.target.iter().enumerate() {
            let row = &self.punctured_mod_target[j];
            let mut acc: u128 = 0;
            for i in 0..k {
                acc += y[i] as u128 * row[i] as u128;
            }
            let s = (acc % t.value() as u128) as u64;
            out[j] = t.sub(s, t.mul(v % t.value(), self.product_mod_target[j]));
        }
    }
}
