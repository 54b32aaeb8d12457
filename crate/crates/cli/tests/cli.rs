use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};

fn run(args: &[&str], paths: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_expertrec"));
    cmd.args(args);
    for p in paths {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn movielens(dir: &Path) -> PathBuf {
    let mut rng = rand::rngs::StdRng::seed_from_u64(9);
    let mut text = String::new();
    for u in 1..=60 {
        for j in 0..40 {
            if j % 60 == u - 1 || rng.gen_bool(0.3) {
                let _ = writeln!(text, "{u}::{}::{}::0", j + 1, rng.gen_range(1..=5));
            }
        }
    }
    // an obvious push profile
    for j in 0..40 {
        let _ = writeln!(text, "99::{}::5::0", j + 1);
    }
    let path = dir.join("ratings.dat");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_then_recommend_both_protocols() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = movielens(dir.path());
    let model = dir.path().join("model.bin");
    let out = run(&["train", "--epochs", "3", "--k", "3", "--ratings"], &[&ratings]);
    assert_eq!(out.status.code(), Some(2), "missing --out is a usage error");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_expertrec"));
    let out = cmd
        .args(["train", "--epochs", "3", "--k", "3", "--ratings"])
        .arg(&ratings)
        .arg("--out")
        .arg(&model)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,loss,rmse"));
    assert_eq!(csv.lines().count(), 4);

    let mut results = Vec::new();
    for protocol in ["noproxy", "proxy"] {
        let out = Command::new(env!("CARGO_BIN_EXE_expertrec"))
            .args(["recommend", "--protocol", protocol, "--thresholds", "3.5,3.4,3.3", "--paillier-bits", "1024"])
            .arg("--model")
            .arg(&model)
            .arg("--ratings")
            .arg(&ratings)
            .args(["--user", "7", "--counters"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("Paillier.Dec"), "{stderr}");
        let ids: Vec<u32> = String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .map(|l| l.parse().unwrap())
            .collect();
        assert!(ids.iter().all(|&i| (1..=40).contains(&i)));
        results.push(ids);
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn robdet_flags_the_push_profile() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = movielens(dir.path());
    let out = run(&["robdet", "--ratings"], &[&ratings]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next(), Some("user,accepted,deviation,filler_z"));
    let row = csv.lines().find(|l| l.starts_with("99,")).unwrap();
    assert!(row.starts_with("99,0,"), "{row}");
    let out = run(&["robdet", "--detector", "nope", "--ratings"], &[&ratings]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_counters_agrees_with_formulas() {
    for protocol in ["noproxy", "proxy"] {
        let out = run(
            &["verify-counters", "--protocol", protocol, "--thresholds", "5.0,4.9", "--items", "40", "--paillier-bits", "1024"],
            &[],
        );
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "{stdout}");
        assert!(stdout.contains("counters match"));
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.bin");
    let base = ["recommend", "--protocol", "proxy", "--paillier-bits", "1024", "--profile", "x", "--model"];
    let with = |thresholds: &str| {
        let mut args = base.to_vec();
        args.splice(2..2, ["--thresholds", thresholds]);
        run(&args, &[&missing]).status.code()
    };
    assert_eq!(with("4.5"), Some(2));
    assert_eq!(with("4.55"), Some(2));
    assert_eq!(with(""), Some(2));
    let out = run(
        &["verify-counters", "--protocol", "proxy", "--thresholds", "5.0", "--items", "4", "--paillier-bits", "256"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(run(&["bench", "--profile", "huge"], &[]).status.code(), Some(2));
}
