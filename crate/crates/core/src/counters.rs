//! Per-party primitive operation counts.
//!
//! SWHE counts are per slot (one per item) so that they line up with
//! per-item complexity formulas; `swhe_dec` is the exception and counts
//! physical decryptions. Physical ciphertext operations are tracked
//! separately in [`OpCounters::swhe_ct`].

use std::fmt;
use std::ops::AddAssign;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SwheCtOps {
    pub enc: u64,
    pub dec: u64,
    pub mul: u64,
    pub mul_plain: u64,
    pub add: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub paillier_enc: u64,
    pub paillier_dec: u64,
    /// add, add_plain, sub_plain
    pub paillier_add: u64,
    pub paillier_scalar_mul: u64,
    pub swhe_enc: u64,
    pub swhe_dec: u64,
    pub swhe_mul: u64,
    pub swhe_mul_plain: u64,
    /// add, sub, add_plain, sub_plain
    pub swhe_add: u64,
    pub prf_eval: u64,
    pub prf_hadd: u64,
    pub swhe_ct: SwheCtOps,
}

impl OpCounters {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    /// Named fields in a fixed order, physical SWHE counts last.
    pub fn fields(&self) -> [(&'static str, u64); 16] {
        [
            ("Paillier.Enc", self.paillier_enc),
            ("Paillier.Dec", self.paillier_dec),
            ("Paillier.Add", self.paillier_add),
            ("Paillier.ScalarMul", self.paillier_scalar_mul),
            ("SWHE.Enc", self.swhe_enc),
            ("SWHE.Dec", self.swhe_dec),
            ("SWHE.Mul", self.swhe_mul),
            ("SWHE.MulPlain", self.swhe_mul_plain),
            ("SWHE.Add", self.swhe_add),
            ("Prf.Evaluate", self.prf_eval),
            ("Prf.Hadd", self.prf_hadd),
            ("SWHE.ct.Enc", self.swhe_ct.enc),
            ("SWHE.ct.Dec", self.swhe_ct.dec),
            ("SWHE.ct.Mul", self.swhe_ct.mul),
            ("SWHE.ct.MulPlain", self.swhe_ct.mul_plain),
            ("SWHE.ct.Add", self.swhe_ct.add),
        ]
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, o: Self) {
        self.paillier_enc += o.paillier_enc;
        self.paillier_dec += o.paillier_dec;
        self.paillier_add += o.paillier_add;
        self.paillier_scalar_mul += o.paillier_scalar_mul;
        self.swhe_enc += o.swhe_enc;
        self.swhe_dec += o.swhe_dec;
        self.swhe_mul += o.swhe_mul;
        self.swhe_mul_plain += o.swhe_mul_plain;
        self.swhe_add += o.swhe_add;
        self.prf_eval += o.prf_eval;
        self.prf_hadd += o.prf_hadd;
        self.swhe_ct.enc += o.swhe_ct.enc;
        self.swhe_ct.dec += o.swhe_ct.dec;
        self.swhe_ct.mul += o.swhe_ct.mul;
        self.swhe_ct.mul_plain += o.swhe_ct.mul_plain;
        self.swhe_ct.add += o.swhe_ct.add;
    }
}

impl fmt::Display for OpCounters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, v) in self.fields() {
            if v == 0 {
                continue;
            }
            if !first {
                f.write_str(", ")?;
            }
            write!(f, "{name}={v}")?;
            first = false;
        }
        if first {
            f.write_str("(none)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    User,
    RecSys,
    Proxy,
}

impl Party {
    pub const ALL: [Party; 3] = [Party::User, Party::RecSys, Party::Proxy];

    pub fn name(self) -> &'static str {
        match self {
            Party::User => "User",
            Party::RecSys => "RecSys",
            Party::Proxy => "Proxy",
        }
    }
}

/// Counters of one session. `prep` holds the encrypted-prediction
/// preparation (profile encryption and the linear model evaluation),
/// which precedes both protocols and is kept out of their tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartyCounters {
    pub user: OpCounters,
    pub recsys: OpCounters,
    pub proxy: OpCounters,
    pub prep: OpCounters,
}

impl PartyCounters {
    pub fn party(&self, p: Party) -> &OpCounters {
        match p {
            Party::User => &self.user,
            Party::RecSys => &self.recsys,
            Party::Proxy => &self.proxy,
        }
    }

    pub fn party_mut(&mut self, p: Party) -> &mut OpCounters {
        match p {
            Party::User => &mut self.user,
            Party::RecSys => &mut self.recsys,
            Party::Proxy => &mut self.proxy,
        }
    }
}
