use std::collections::BTreeSet;
use std::sync::OnceLock;

use expertrec_core::paillier::{keygen, PaillierKeyPair};
use expertrec_core::protocol::{
    carry, check_guard, lift, mask_for_reduction, mask_value, oracle_recommend, rekey_masked,
    sample_masks, unmask_round, FixedPointSpec, MaskSign, ReductionEntry, ThresholdSet, LAMBDA,
};
use expertrec_core::rng::derive_rng;
use rand::Rng;
use rug::Integer;

fn keys(i: usize) -> &'static PaillierKeyPair {
    static K: OnceLock<[PaillierKeyPair; 2]> = OnceLock::new();
    &K.get_or_init(|| {
        let mut rng = derive_rng(9, "common-keys");
        [keygen(1024, &mut rng).unwrap(), keygen(1024, &mut rng).unwrap()]
    })[i]
}

#[test]
fn encode_examples() {
    let s = FixedPointSpec::default();
    assert_eq!(s.encode_prediction(4.93).unwrap(), (49, 300));
    assert_eq!(s.encode_prediction(5.0).unwrap(), (50, 0));
    assert_eq!(s.encode_prediction(0.0).unwrap(), (0, 0));
    assert_eq!(s.encode_prediction(-1.0).unwrap(), (0, 0));
    assert_eq!(s.encode_prediction(9.0).unwrap(), (60, 0));
    assert!(s.encode_prediction(f64::NAN).is_err());
    let big = FixedPointSpec::with_theta(1_000_000_000_000_000);
    assert_eq!(big.encode_prediction(4.93).unwrap().0, 49);
}

#[test]
fn threshold_parsing() {
    let s = FixedPointSpec::default();
    assert_eq!(ThresholdSet::parse("5.0,4.9", &s).unwrap().values(), &[50, 49]);
    assert_eq!(ThresholdSet::parse("4.9, 5", &s).unwrap().values(), &[50, 49]);
    assert!(ThresholdSet::parse("4.95", &s).is_err());
    assert!(ThresholdSet::parse("5,4.9,4.8,4.7,4.6", &s).is_err());
    assert!(ThresholdSet::parse("", &s).is_err());
}

fn reduce(x: i64, y: u64, r1: u64, r2: u64, theta: u64) -> (Integer, Integer) {
    let kp = keys(0);
    let mut rng = derive_rng(x as u64 ^ r2, "reduce");
    let ct = kp.public.encrypt(&(Integer::from(x) * theta + y), &mut rng).unwrap();
    let e = ReductionEntry { r1, r2 };
    let masked = mask_for_reduction(&kp.public, &ct, &e, theta, MaskSign::Plus).unwrap();
    let alpha = kp.secret.decrypt_signed(&masked).unwrap();
    let beta = unmask_round(&alpha, theta);
    (alpha, beta)
}

#[test]
fn reduction_examples() {
    let theta = 1000;
    let (alpha, beta) = reduce(50, 0, 7, theta - 1, theta);
    assert_eq!(alpha, 57 * theta + theta - 1);
    assert_eq!(beta, 57);
    assert_eq!(carry(0, theta - 1, theta), 0);

    let y = 420;
    let (_, beta) = reduce(50, y, 7, theta - y, theta);
    assert_eq!(carry(y, theta - y, theta), 1);
    assert_eq!(beta, 50 + 7 + 1);

    assert_eq!(reduce(44, 999, 0, 0, theta).1, 44);
}

#[test]
fn unmask_examples() {
    let theta = 1000;
    assert_eq!(unmask_round(&Integer::from(57 * theta + 999), theta), 57);
    assert_eq!(unmask_round(&Integer::from(0), theta), 0);
    assert_eq!(unmask_round(&Integer::from(theta - 1), theta), 0);
    assert_eq!(unmask_round(&Integer::from(-1), theta), -1);
}

#[test]
fn oracle_examples() {
    let v = ThresholdSet::new(vec![50, 49]).unwrap();
    assert!(oracle_recommend(&[50, 49], &[true, true], &v, &[0, 0]).is_empty());
    let got = oracle_recommend(&[50, 49, 48], &[false; 3], &v, &[0, 0, 1]);
    assert_eq!(got, BTreeSet::from([0, 1, 2]));
    let only = ThresholdSet::new(vec![50]).unwrap();
    assert!(oracle_recommend(&[0; 4], &[false; 4], &only, &[0, 1, 0, 1]).is_empty());
}

#[test]
fn carry_frequency_tracks_fraction() {
    let theta = 1000;
    let n = 100_000;
    for y in [0u64, 250, 500, 999] {
        let rec = sample_masks(n, theta, &mut derive_rng(y, "r1"), &mut derive_rng(y, "r2"));
        let ones = rec.entries.iter().filter(|e| carry(y, e.r2, theta) == 1).count();
        let p = ones as f64 / n as f64;
        assert!((p - y as f64 / theta as f64).abs() <= 0.03, "y={y}: {p}");
    }
}

#[test]
fn masked_values_never_wrap() {
    let kp = keys(0);
    let n = kp.public.n();
    let theta = 1_000_000_000_000_000u64;
    check_guard(&kp.public, theta, 16).unwrap();
    let mut rng = derive_rng(10, "no-wrap");
    let l = lift();
    for _ in 0..200_000 {
        let x = Integer::from(rng.gen_range(0..1u64 << 16));
        let y = rng.gen_range(0..theta);
        let e = ReductionEntry {
            r1: rng.gen_range(0..1u64 << LAMBDA),
            r2: rng.gen_range(0..theta),
        };
        let base = Integer::from(&x * theta) + y;
        let plus = Integer::from(&base + mask_value(&e, theta, MaskSign::Plus));
        assert!(plus < *n && plus >= 0);
        // the minus form, as the protocol stores it: x·θ + y + (L − r1)·θ + r2
        let minus = Integer::from(&base + mask_value(&e, theta, MaskSign::Minus));
        assert!(minus >= 0 && minus < *n);
        assert_eq!(unmask_round(&minus, theta), Integer::from(&x + &l) - e.r1 + carry(y, e.r2, theta));
    }
}

#[test]
fn guard_rejects_small_keys() {
    let kp = keys(0);
    assert!(check_guard(&kp.public, 1 << 62, 16).is_ok());
    assert!(check_guard(&kp.public, 1000, 1000).is_err());
}

#[test]
fn rekey_round_trips() {
    let (a, b) = (keys(0), keys(1));
    let mut rng = derive_rng(11, "rekey");
    let ct = a.public.encrypt(&Integer::from(42), &mut rng).unwrap();
    let out = rekey_masked(&ct, &a.public, &a.secret, &b.public, 64, None, &mut rng).unwrap();
    assert_eq!(b.secret.decrypt(&out.ciphertext).unwrap(), 42);
    assert_ne!(out.proxy_view, 42);

    let back = rekey_masked(&out.ciphertext, &b.public, &b.secret, &a.public, 64, None, &mut rng).unwrap();
    assert_eq!(a.secret.decrypt(&back.ciphertext).unwrap(), 42);
}

#[test]
fn rekey_without_mask_leaks() {
    let (a, b) = (keys(0), keys(1));
    let mut rng = derive_rng(12, "rekey-leak");
    let ct = a.public.encrypt(&Integer::from(42), &mut rng).unwrap();
    let out = rekey_masked(&ct, &a.public, &a.secret, &b.public, 64, Some(Integer::new()), &mut rng).unwrap();
    assert_eq!(b.secret.decrypt(&out.ciphertext).unwrap(), 42);
    // negative control for the leakage audit: the decrypting party saw the plaintext
    assert_eq!(out.proxy_view, 42);
}

#[test]
fn rekey_guard() {
    let (a, b) = (keys(0), keys(1));
    let mut rng = derive_rng(13, "rekey-guard");
    let ct = a.public.encrypt(&Integer::from(1), &mut rng).unwrap();
    assert!(rekey_masked(&ct, &a.public, &a.secret, &b.public, 1000, None, &mut rng).is_err());
}
