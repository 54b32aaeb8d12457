use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rug::Integer;

use expertrec_core::expert::{read_model, train_with_report, write_model, ExpertError, TrainConfig};
use expertrec_core::harness::{
    assert_counters, expected_counters, run_bench, run_session, table_rows, BenchProfile,
    PredictionInput, ProtocolKind, SessionConfig, SessionRegistry,
};
use expertrec_core::ratings::{robdet_filter, DetectorConfig, DeviationDetector};
use expertrec_core::rng::derive_rng;
use expertrec_core::swhe::SwheParams;
use expertrec_core::{ExpertModel, ThresholdSet};

use crate::profile::{align, load_ratings, open, read_profile, user_row};
use crate::{
    BenchArgs, CliError, DetectorArgs, HistogramArgs, Profile, Protocol, RecommendArgs,
    RobdetArgs, SessionArgs, TrainArgs, VerifyArgs,
};

fn detector(a: &DetectorArgs) -> DetectorConfig {
    DetectorConfig {
        name: a.detector.clone(),
        deviation_threshold: a.deviation_threshold,
        filler_z_threshold: a.filler_z_threshold,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Run(e.to_string())
}

fn expert_err(e: ExpertError) -> CliError {
    match e {
        ExpertError::Diverged(_) => CliError::Run(e.to_string()),
        e => CliError::Config(e.to_string()),
    }
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let data = load_ratings(&a.ratings, a.r_max)?;
    let verdict = robdet_filter(&data, &detector(&a.detector)).map_err(|e| CliError::Config(e.to_string()))?;
    eprintln!(
        "{} of {} profiles accepted, {} ratings over {} items",
        verdict.accepted_count(),
        data.num_users(),
        data.len(),
        data.num_items()
    );
    let cfg = TrainConfig {
        k: a.k,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        reg_user: a.reg_user,
        reg_item: a.reg_item,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let (model, report) = train_with_report(&data, &verdict, &cfg).map_err(expert_err)?;
    println!("epoch,loss,rmse");
    for (i, (l, r)) in report.epoch_loss.iter().zip(&report.epoch_rmse).enumerate() {
        println!("{},{l:.4},{r:.4}", i + 1);
    }
    write_model(&model, create(&a.out)?).map_err(expert_err)?;
    eprintln!("model written to {}", a.out.display());
    Ok(())
}

fn session_config(s: &SessionArgs) -> Result<SessionConfig, CliError> {
    let protocol = match s.protocol {
        Protocol::Noproxy => ProtocolKind::NoProxy,
        Protocol::Proxy => ProtocolKind::Proxy,
    };
    // thresholds are parsed at the session's granularity
    let probe = SessionConfig::new(protocol, ThresholdSet::new(vec![0]).expect("one value"));
    let thresholds = ThresholdSet::parse(&s.thresholds, &probe.fixed_point)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut cfg = SessionConfig::new(protocol, thresholds);
    cfg.paillier_bits = s.paillier_bits;
    cfg.swhe = match s.swhe {
        Profile::Paper => SwheParams::paper(),
        Profile::Desk => SwheParams::desk(),
    };
    cfg.batched = !s.unbatched;
    cfg.seed = s.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<ExpertModel, CliError> {
    read_model(open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn print_counters(out: &mut dyn Write, c: &expertrec_core::PartyCounters, protocol: ProtocolKind) -> std::io::Result<()> {
    for (party, row) in table_rows(c, protocol) {
        let cells: Vec<String> = row.iter().map(|(n, v)| format!("{n}={v}")).collect();
        writeln!(out, "{:<7} {}", party.name(), cells.join(" "))?;
    }
    Ok(())
}

pub fn recommend(a: RecommendArgs) -> Result<(), CliError> {
    let cfg = session_config(&a.session)?;
    let model = load_model(&a.model)?;
    let ratings = match (&a.profile, &a.ratings, a.user) {
        (Some(p), _, _) => read_profile(p, &model)?,
        (None, Some(r), Some(u)) => user_row(&load_ratings(r, model.experts.r_max())?, u, &model)?,
        _ => return Err(CliError::Config("give --profile, or --ratings with --user".into())),
    };
    let out = run_session(
        &mut SessionRegistry::new(),
        PredictionInput::Model { model: &model, ratings: &ratings },
        &cfg,
    )?;
    let ids = model.experts.item_ids();
    let mut stdout = std::io::stdout().lock();
    for &j in &out.items {
        writeln!(stdout, "{}", ids[j]).map_err(io_err)?;
    }
    eprintln!(
        "{}: {} of {} unrated items recommended",
        cfg.protocol.name(),
        out.items.len(),
        ratings.iter().filter(|&&r| r == 0).count()
    );
    if a.counters {
        print_counters(&mut std::io::stderr(), &out.counters, cfg.protocol).map_err(io_err)?;
    }
    if let Some(path) = a.transcript {
        fs::write(&path, out.transcript.to_bytes())
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

pub fn robdet(a: RobdetArgs) -> Result<(), CliError> {
    let data = load_ratings(&a.ratings, a.r_max)?;
    let cfg = detector(&a.detector);
    let verdict = robdet_filter(&data, &cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let scores = DeviationDetector::scores(&data);
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "user,accepted,deviation,filler_z").map_err(io_err)?;
    for (u, s) in scores.iter().enumerate() {
        writeln!(
            out,
            "{},{},{:.4},{:.4}",
            data.user_ids()[u],
            verdict.bits()[u] as u8,
            s.mean_abs_deviation,
            s.filler_z
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    eprintln!("{} of {} profiles accepted", verdict.accepted_count(), verdict.len());
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<(), CliError> {
    let profile = match a.profile {
        Profile::Paper => BenchProfile::Paper,
        Profile::Desk => BenchProfile::Desk,
    };
    let report = run_bench(profile, a.samples)?;
    print!("{report}");
    if let Some(p) = a.csv {
        fs::write(&p, report.to_csv()).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

pub fn histogram(a: HistogramArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let data = align(&load_ratings(&a.ratings, a.r_max)?, &model)?;
    let h = expertrec_core::harness::histogram(&model, &data).map_err(expert_err)?;
    let csv = expertrec_core::harness::histogram_csv(&h);
    match a.out {
        Some(p) => fs::write(&p, csv).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    eprintln!("{} pairs in {} buckets", h.pairs, h.buckets.len());
    Ok(())
}

pub fn verify_counters(a: VerifyArgs) -> Result<(), CliError> {
    let cfg = session_config(&a.session)?;
    let m = a.items;
    let t = cfg.thresholds.len() as u64;
    let theta = cfg.fixed_point.theta;
    let top = cfg.thresholds.values()[0];
    let mut rng = derive_rng(cfg.seed, "verify-instance");
    let values: Vec<Integer> = (0..m)
        .map(|_| Integer::from(rng.gen_range((top - 3).max(0)..=top + 1)) * theta + rng.gen_range(0..theta))
        .collect();
    let rated: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.3)).collect();
    let out = run_session(
        &mut SessionRegistry::new(),
        PredictionInput::Plain { values: &values, rated: &rated },
        &cfg,
    )?;
    let slots = cfg.swhe.slots() as u64;
    let expected = expected_counters(cfg.protocol, m as u64, t, cfg.batched, slots);
    println!("{} M={m} T={t}", cfg.protocol.name());
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "observed").map_err(io_err)?;
    print_counters(&mut stdout, &out.counters, cfg.protocol).map_err(io_err)?;
    writeln!(stdout, "expected").map_err(io_err)?;
    print_counters(&mut stdout, &expected, cfg.protocol).map_err(io_err)?;
    if cfg.protocol == ProtocolKind::NoProxy {
        writeln!(
            stdout,
            "note: the published complexity table lists M SWHE.Dec for the recommender; \
             it holds no SWHE secret key, so 0 is expected and its M mask removals are \
             counted under SWHE.Add"
        )
        .map_err(io_err)?;
    }
    drop(stdout);
    match assert_counters(&out.counters, cfg.protocol, m as u64, t, cfg.batched, slots) {
        Ok(()) => {
            println!("counters match");
            Ok(())
        }
        Err(diff) => Err(CliError::Run(format!("counter mismatch\n{diff}"))),
    }
}
