//! Wall-clock timing of the eight primitives, laid out as two rows of four.
//! Timings are reported next to reference figures; nothing is asserted.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rug::Integer;

use super::HarnessError;
use crate::paillier;
use crate::rng::{derive_rng, random_bits};
use crate::swhe::{self, SlotVector, SwheContext, SwheParams};

/// Reference timings in seconds, in layout order.
pub const REFERENCE_TIMINGS: [(&str, f64); 8] = [
    ("Paillier.Enc", 31.30e-3),
    ("Paillier.Dec", 12.88e-3),
    ("Paillier.Add", 8.50e-6),
    ("SWHE.Enc", 52.43e-3),
    ("SWHE.Dec", 39.63e-3),
    ("SWHE.Mul", 207.76e-3),
    ("SWHE.MulPlain", 70.28e-3),
    ("SWHE.Add", 742e-6),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchProfile {
    /// 2048-bit Paillier, SWHE degree 8192.
    Paper,
    /// 1024-bit Paillier, SWHE degree 4096.
    Desk,
}

impl BenchProfile {
    pub fn paillier_bits(self) -> u32 {
        match self {
            BenchProfile::Paper => 2048,
            BenchProfile::Desk => 1024,
        }
    }

    pub fn swhe(self) -> SwheParams {
        match self {
            BenchProfile::Paper => SwheParams::paper(),
            BenchProfile::Desk => SwheParams::desk(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchProfile::Paper => "paper",
            BenchProfile::Desk => "desk",
        }
    }
}

impl FromStr for BenchProfile {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(BenchProfile::Paper),
            "desk" => Ok(BenchProfile::Desk),
            other => Err(HarnessError::Config(format!("unknown profile '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: &'static str,
    pub mean: f64,
    pub std_dev: f64,
    pub samples: usize,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub profile: BenchProfile,
    pub rows: Vec<BenchRow>,
}

fn time<F: FnMut()>(samples: usize, mut f: F) -> (f64, f64) {
    f();
    let mut xs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let t = Instant::now();
        f();
        xs.push(t.elapsed().as_secs_f64());
    }
    let mean = xs.iter().sum::<f64>() / samples as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.max(2) - 1) as f64;
    (mean, var.sqrt())
}

/// Times each primitive `samples` times (at least 30).
pub fn run_bench(profile: BenchProfile, samples: usize) -> Result<BenchReport, HarnessError> {
    let samples = samples.max(30);
    let mut rng = derive_rng(7, "bench");
    let kp = paillier::keygen(profile.paillier_bits(), &mut rng)?;
    let pk = &kp.public;
    let m = random_bits(&mut rng, 64);
    let c1 = pk.encrypt(&m, &mut rng)?;
    let c2 = pk.encrypt(&Integer::from(12345), &mut rng)?;

    let ctx = SwheContext::new(profile.swhe())?;
    let keys = swhe::keygen(&ctx, &mut rng);
    let spk = &keys.public;
    let params = ctx.params();
    let vals: Vec<u128> = (0..ctx.slots()).map(|i| (i as u128 * 7919) % 1000).collect();
    let sv = SlotVector::encode(params, &vals)?;
    let s1 = spk.encrypt(&sv, &mut rng)?;
    let s2 = spk.encrypt(&sv, &mut rng)?;

    let mut out = Vec::with_capacity(8);
    let mut push = |i: usize, (mean, std_dev): (f64, f64)| {
        out.push(BenchRow {
            name: REFERENCE_TIMINGS[i].0,
            mean,
            std_dev,
            samples,
            reference: REFERENCE_TIMINGS[i].1,
        })
    };
    push(0, time(samples, || drop(pk.encrypt(&m, &mut rng).unwrap())));
    push(1, time(samples, || drop(kp.secret.decrypt(&c1).unwrap())));
    push(2, time(samples, || drop(pk.add(&c1, &c2).unwrap())));
    push(3, time(samples, || drop(spk.encrypt(&sv, &mut rng).unwrap())));
    push(4, time(samples, || drop(keys.secret.decrypt(&s1).unwrap())));
    push(5, time(samples, || drop(spk.mul(&s1, &s2).unwrap())));
    push(6, time(samples, || drop(spk.mul_plain(&s1, &sv).unwrap())));
    push(7, time(samples, || drop(spk.add(&s1, &s2).unwrap())));
    Ok(BenchReport { profile, rows: out })
}

fn fmt_secs(s: f64) -> String {
    if s >= 1.0 {
        format!("{s:.2} s")
    } else if s >= 1e-3 {
        format!("{:.2} ms", s * 1e3)
    } else {
        format!("{:.2} us", s * 1e6)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "profile {} ({} samples each; reference figures from different hardware)",
            self.profile.name(),
            self.rows.first().map_or(0, |r| r.samples)
        )?;
        for chunk in self.rows.chunks(4) {
            let line = |g: &dyn Fn(&BenchRow) -> String| {
                chunk.iter().map(|r| format!("{:>22}", g(r))).collect::<String>()
            };
            writeln!(f, "{:<10}{}", "", line(&|r| r.name.to_string()))?;
            writeln!(
                f,
                "{:<10}{}",
                "measured",
                line(&|r| format!("{} ± {}", fmt_secs(r.mean), fmt_secs(r.std_dev)))
            )?;
            writeln!(f, "{:<10}{}", "reference", line(&|r| fmt_secs(r.reference)))?;
        }
        Ok(())
    }
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("primitive,mean_s,std_s,samples,reference_s\n");
        for r in &self.rows {
            s += &format!("{},{:.9},{:.9},{},{:.9}\n", r.name, r.mean, r.std_dev, r.samples, r.reference);
        }
        s
    }
}
