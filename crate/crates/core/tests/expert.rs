use expertrec_core::expert::{
    encrypt_profile, read_model, train, train_with_report, write_model, EncryptedScaling,
    ExpertModel, TrainConfig,
};
use expertrec_core::paillier::keygen;
use expertrec_core::ratings::{RatingMatrix, RobDetVerdict};
use expertrec_core::rng::derive_rng;
use expertrec_core::OpCounters;
use rand::Rng;
use rug::Integer;

fn toy_3x3() -> RatingMatrix {
    RatingMatrix::from_entries(
        3,
        3,
        5,
        [(0, 0, 5), (0, 1, 3), (1, 1, 4), (1, 2, 1), (2, 0, 2), (2, 2, 5)],
    )
    .unwrap()
}

fn random_model(seed: u64, experts: RatingMatrix, k: usize) -> ExpertModel {
    let mut rng = derive_rng(seed, "test-model");
    let mut m = ExpertModel::zeroed(experts, k).unwrap();
    let mut v = m.params_vec();
    for x in &mut v {
        *x = rng.gen_range(-0.5..0.5);
    }
    m.set_params_vec(&v);
    m.recompute_average();
    m
}

#[test]
fn gradient_matches_central_differences() {
    let (lu, li) = (0.03, 0.05);
    let model = random_model(1, toy_3x3(), 2);
    let g = model.gradient(lu, li).to_vec();
    let base = model.params_vec();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut m = model.clone();
        let mut v = base.clone();
        v[i] += h;
        m.set_params_vec(&v);
        let up = m.loss(lu, li);
        v[i] -= 2.0 * h;
        m.set_params_vec(&v);
        let down = m.loss(lu, li);
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

fn rank_one(n: u32, m: u32) -> RatingMatrix {
    let mut rng = derive_rng(2, "rank-one");
    let u: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=2)).collect();
    let v: Vec<u8> = (0..m).map(|_| rng.gen_range(0..=2)).collect();
    let cells = (0..n).flat_map(|t| (0..m).map(move |j| (t, j)));
    let entries: Vec<_> = cells
        .map(|(t, j)| (t, j, 1 + u[t as usize] * v[j as usize]))
        .collect();
    RatingMatrix::from_entries(n, m, 5, entries).unwrap()
}

#[test]
fn rank_one_fit() {
    let data = rank_one(30, 10);
    let cfg = TrainConfig {
        k: 2,
        learning_rate: 0.002,
        epochs: 1500,
        reg_user: 1e-4,
        reg_item: 1e-4,
        init_scale: 0.5,
        seed: 3,
    };
    let (model, report) = train_with_report(&data, &RobDetVerdict::accept_all(30), &cfg).unwrap();
    let rmse = model.training_rmse();
    println!("rank-1 training RMSE {rmse:.4}");
    assert!(rmse < 0.1, "rmse {rmse}");
    assert!(report.epoch_loss.last() < report.epoch_loss.first());
}

#[test]
fn rejected_profiles_are_not_trained_on() {
    let data = toy_3x3();
    let verdict = RobDetVerdict::from_bits(vec![true, false, true]);
    let model = train(&data, &verdict, &TrainConfig { k: 2, epochs: 2, ..Default::default() }).unwrap();
    assert_eq!(model.num_experts(), 2);
    assert_eq!(model.experts.len(), 4);
}

#[test]
fn snapshot_round_trip() {
    let model = random_model(4, toy_3x3(), 3);
    let mut buf = Vec::new();
    write_model(&model, &mut buf).unwrap();
    assert_eq!(read_model(&buf[..]).unwrap(), model);
}

/// Exact rational reference for the encrypted evaluation at scale `S`.
fn scaled_reference(model: &ExpertModel, ratings: &[u8], mean: f64, j: usize, s: f64) -> f64 {
    model.predict_external(ratings, mean, j).unwrap() * s
}

#[test]
fn encrypted_prediction_is_close_to_plaintext() {
    let mut rng = derive_rng(5, "fidelity");
    let keys = keygen(1024, &mut rng).unwrap();
    let scaling = EncryptedScaling::default();
    let total = scaling.total().to_f64();
    // compare at one-decimal-star precision times 10^3
    let unit = total / 1e4;
    for trial in 0..20 {
        let n = 4;
        let m = 6;
        let entries: Vec<_> = (0..n)
            .flat_map(|t| (0..m).map(move |j| (t, j)))
            .filter_map(|(t, j)| rng.gen_bool(0.6).then(|| (t, j, rng.gen_range(1..=5u8))))
            .collect();
        let Ok(experts) = RatingMatrix::from_entries(n, m, 5, entries) else {
            continue;
        };
        if experts.is_empty() {
            continue;
        }
        let model = random_model(trial, experts, 3);
        let ratings: Vec<u8> = (0..m).map(|_| rng.gen_range(0..=5u8)).collect();
        let mean = 3.25;
        let mut counters = OpCounters::default();
        let profile = encrypt_profile(&keys.secret, &ratings, mean, scaling, &mut rng, &mut counters).unwrap();
        let items: Vec<usize> = (0..m as usize).collect();
        let cts = model
            .encrypted_predict(&keys.public, &profile, &items, scaling, &mut counters)
            .unwrap();
        for (j, c) in cts.iter().enumerate() {
            let got: Integer = keys.secret.decrypt_signed(c).unwrap();
            let want = scaled_reference(&model, &ratings, mean, j, total);
            let diff = (got.to_f64() - want).abs() / unit;
            assert!(diff <= 4.0, "trial {trial} item {j}: {diff} units");
        }
    }
}
