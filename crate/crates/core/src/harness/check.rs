//! Expected per-party operation counts and comparison with a diff.

use std::fmt;

use super::ProtocolKind;
use crate::counters::{OpCounters, Party, PartyCounters};

/// Closed-form counts for one session with `m` items and `t` thresholds.
/// `slots` is the SWHE batch width; `batched = false` packs one item per
/// ciphertext.
pub fn expected_counters(
    protocol: ProtocolKind,
    m: u64,
    t: u64,
    batched: bool,
    slots: u64,
) -> PartyCounters {
    let mut c = PartyCounters::default();
    match protocol {
        ProtocolKind::NoProxy => {
            let groups = if batched { m.div_ceil(slots) } else { m };
            c.user.paillier_dec = m;
            c.user.swhe_enc = m;
            c.user.swhe_dec = groups;
            c.user.swhe_ct.enc = groups;
            c.user.swhe_ct.dec = groups;
            c.recsys.paillier_add = m;
            c.recsys.swhe_mul = m * t.saturating_sub(1);
            c.recsys.swhe_mul_plain = m;
            c.recsys.swhe_add = m * (t + 1);
            c.recsys.swhe_ct.mul = groups * t.saturating_sub(1);
            c.recsys.swhe_ct.mul_plain = groups;
            c.recsys.swhe_ct.add = groups * (t + 1);
        }
        ProtocolKind::Proxy => {
            c.user.paillier_dec = m;
            c.user.prf_eval = m * (1 + t);
            c.recsys.paillier_add = m;
            c.recsys.prf_eval = m;
            c.proxy.prf_hadd = m;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterMismatch {
    pub party: Party,
    pub field: &'static str,
    pub expected: u64,
    pub observed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CounterDiff {
    pub mismatches: Vec<CounterMismatch>,
}

impl CounterDiff {
    pub fn is_empty(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl fmt::Display for CounterDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.mismatches {
            writeln!(
                f,
                "{:<7} {:<18} expected {:>8} observed {:>8}",
                m.party.name(),
                m.field,
                m.expected,
                m.observed
            )?;
        }
        Ok(())
    }
}

fn diff_party(party: Party, expected: &OpCounters, observed: &OpCounters, out: &mut CounterDiff) {
    for ((field, e), (_, o)) in expected.fields().into_iter().zip(observed.fields()) {
        if e != o {
            out.mismatches.push(CounterMismatch {
                party,
                field,
                expected: e,
                observed: o,
            });
        }
    }
}

/// Exact comparison of the protocol tallies; `prep` is not compared.
pub fn assert_counters(
    observed: &PartyCounters,
    protocol: ProtocolKind,
    m: u64,
    t: u64,
    batched: bool,
    slots: u64,
) -> Result<(), CounterDiff> {
    let expected = expected_counters(protocol, m, t, batched, slots);
    let mut diff = CounterDiff::default();
    for p in Party::ALL {
        diff_party(p, expected.party(p), observed.party(p), &mut diff);
    }
    if diff.is_empty() {
        Ok(())
    } else {
        Err(diff)
    }
}

/// Per-party rows of the complexity table for printing.
pub fn table_rows(c: &PartyCounters, protocol: ProtocolKind) -> Vec<(Party, Vec<(&'static str, u64)>)> {
    let cols: &[&str] = match protocol {
        ProtocolKind::NoProxy => &[
            "Paillier.Dec",
            "Paillier.Add",
            "SWHE.Enc",
            "SWHE.Dec",
            "SWHE.Mul",
            "SWHE.MulPlain",
            "SWHE.Add",
        ],
        ProtocolKind::Proxy => &["Paillier.Dec", "Paillier.Add", "Prf.Evaluate", "Prf.Hadd"],
    };
    let parties: &[Party] = match protocol {
        ProtocolKind::NoProxy => &[Party::User, Party::RecSys],
        ProtocolKind::Proxy => &Party::ALL,
    };
    parties
        .iter()
        .map(|&p| {
            let fields = c.party(p).fields();
            let row = cols
                .iter()
                .map(|&name| (name, fields.iter().find(|(n, _)| *n == name).unwrap().1))
                .collect();
            (p, row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_items_means_zero_counts() {
        for p in [ProtocolKind::NoProxy, ProtocolKind::Proxy] {
            let c = expected_counters(p, 0, 3, true, 4096);
            assert!(c.user.is_zero() && c.recsys.is_zero() && c.proxy.is_zero());
        }
    }

    #[test]
    fn diff_lists_fields() {
        let mut obs = expected_counters(ProtocolKind::Proxy, 10, 2, true, 1);
        obs.user.prf_eval += 1;
        let d = assert_counters(&obs, ProtocolKind::Proxy, 10, 2, true, 1).unwrap_err();
        assert_eq!(d.mismatches.len(), 1);
        assert_eq!(d.mismatches[0].expected, 30);
        assert!(d.to_string().contains("Prf.Evaluate"));
    }
}
