use std::collections::BTreeMap;

use expertrec_core::ratings::{
    compute_stats, parse_movielens, robdet_filter, write_movielens, DetectorConfig, DeviationDetector,
    RatingMatrix, RatingsError,
};
use expertrec_core::rng::derive_rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn single_line_maps_to_dense_indices() {
    let m = parse_movielens("1::1193::5::978300760\n".as_bytes(), 5).unwrap();
    assert_eq!((m.num_users(), m.num_items(), m.len()), (1, 1, 1));
    assert_eq!(m.get(0, 0), Some(5));
    assert_eq!(m.user_ids(), &[1]);
    assert_eq!(m.item_ids(), &[1193]);
}

#[test]
fn tab_separated_input() {
    let m = parse_movielens("196\t242\t3\t881250949\n186\t302\t3\t891717742\n".as_bytes(), 5).unwrap();
    assert_eq!(m.len(), 2);
}

#[test]
fn bad_inputs() {
    assert!(matches!(parse_movielens("".as_bytes(), 5), Err(RatingsError::Empty)));
    let dup = "1::10::4::0\n2::10::3::0\n1::10::5::0\n";
    match parse_movielens(dup.as_bytes(), 5) {
        Err(RatingsError::Duplicate { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    match parse_movielens("1::2::7::0\n".as_bytes(), 5) {
        Err(RatingsError::OutOfRange { rating: 7, .. }) => {}
        other => panic!("{other:?}"),
    }
    match parse_movielens("1::2::3::0\n1::x::3::0\n".as_bytes(), 5) {
        Err(RatingsError::Malformed { line: 2, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn stats_examples() {
    let m = RatingMatrix::from_entries(1, 2, 5, [(0, 0, 4), (0, 1, 2)]).unwrap();
    let s = compute_stats(&m).unwrap();
    assert_eq!(s.global_mean, 3.0);
    assert_eq!(s.user_mean[0], 3.0);
    assert_eq!(s.item_bias(0), 1.0);

    let single = RatingMatrix::from_entries(2, 2, 5, [(1, 0, 5)]).unwrap();
    let s = compute_stats(&single).unwrap();
    assert_eq!(s.global_mean, 5.0);
    assert_eq!((s.user_bias(0), s.user_bias(1), s.item_bias(1)), (0.0, 0.0, 0.0));

    let empty = RatingMatrix::from_entries(2, 2, 5, []).unwrap();
    assert!(compute_stats(&empty).is_err());
}

fn honest_population(seed: u64, users: u32, items: u32) -> Vec<(u32, u32, u8)> {
    let mut rng = derive_rng(seed, "honest");
    let centre: Vec<f64> = (0..items).map(|_| rng.gen_range(2.2..3.8)).collect();
    let mut out = Vec::new();
    for u in 0..users {
        for j in 0..items {
            if rng.gen_bool(0.4) {
                let r = (centre[j as usize] + rng.gen_range(-0.6..0.6)).round().clamp(1.0, 5.0);
                out.push((u, j, r as u8));
            }
        }
    }
    out
}

#[test]
fn injected_profile_is_rejected() {
    let (users, items) = (60, 40);
    let mut entries = honest_population(1, users, items);
    let honest = RatingMatrix::from_entries(users, items, 5, entries.clone()).unwrap();
    let v = robdet_filter(&honest, &DetectorConfig::default()).unwrap();
    assert_eq!(v.accepted_count(), users as usize);

    entries.extend((0..items).map(|j| (users, j, 5)));
    let attacked = RatingMatrix::from_entries(users + 1, items, 5, entries).unwrap();
    let v = robdet_filter(&attacked, &DetectorConfig::default()).unwrap();
    assert!(!v.accepted(users));
    // recomputed statistic for the injected row
    let scores = DeviationDetector::scores(&attacked);
    let stats = compute_stats(&attacked).unwrap();
    let mad: f64 = (0..items).map(|j| (5.0 - stats.item_mean[j as usize]).abs()).sum::<f64>() / items as f64;
    assert!((scores[users as usize].mean_abs_deviation - mad).abs() < 1e-12);
    assert!(mad > 1.5 || scores[users as usize].filler_z > 3.0);
}

#[test]
fn unknown_detector_and_empty_set() {
    let m = RatingMatrix::from_entries(0, 3, 5, []).unwrap();
    assert!(robdet_filter(&m, &DetectorConfig::default()).unwrap().is_empty());
    let cfg = DetectorConfig {
        name: "nope".into(),
        ..Default::default()
    };
    assert!(matches!(robdet_filter(&m, &cfg), Err(RatingsError::UnknownDetector(_))));
}

fn cells() -> impl Strategy<Value = BTreeMap<(u32, u32), u8>> {
    proptest::collection::btree_map((1u32..30, 1u32..50), 1u8..=5, 1..120)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn movielens_round_trip(cells in cells()) {
        let text: String = cells.iter().map(|(&(u, i), r)| format!("{u}::{i}::{r}::0\n")).collect();
        let m = parse_movielens(text.as_bytes(), 5).unwrap();
        let mut buf = Vec::new();
        write_movielens(&m, &mut buf).unwrap();
        let again = parse_movielens(&buf[..], 5).unwrap();
        let key = |m: &RatingMatrix| -> BTreeMap<(u32, u32), u8> {
            m.entries()
                .iter()
                .map(|r| ((m.user_ids()[r.user as usize], m.item_ids()[r.item as usize]), r.value))
                .collect()
        };
        prop_assert_eq!(key(&m), cells.clone());
        prop_assert_eq!(key(&again), cells);
    }

    #[test]
    fn uniform_matrix_has_zero_biases(c in 1u8..=5, n in 1u32..8, m in 1u32..8) {
        let e: Vec<_> = (0..n).flat_map(|u| (0..m).map(move |j| (u, j, c))).collect();
        let s = compute_stats(&RatingMatrix::from_entries(n, m, 5, e).unwrap()).unwrap();
        prop_assert_eq!(s.global_mean, c as f64);
        for u in 0..n { prop_assert_eq!(s.user_bias(u), 0.0); }
        for j in 0..m { prop_assert_eq!(s.item_bias(j), 0.0); }
    }

    #[test]
    fn detector_is_pure_and_monotone(seed in 0u64..1000, lo in 0.2f64..1.5, step in 0.0f64..1.0) {
        let m = RatingMatrix::from_entries(25, 20, 5, honest_population(seed, 25, 20)).unwrap();
        let strict = DetectorConfig { deviation_threshold: lo, ..Default::default() };
        let loose = DetectorConfig { deviation_threshold: lo + step, ..Default::default() };
        let a = robdet_filter(&m, &strict).unwrap();
        prop_assert_eq!(&a, &robdet_filter(&m, &strict).unwrap());
        let b = robdet_filter(&m, &loose).unwrap();
        for u in 0..25 {
            prop_assert!(!a.accepted(u) || b.accepted(u));
        }
    }
}
