use std::path::Path;
use std::process::Command;
use std::time::Instant;

use reach_harness::commands::{self, GoalSource};
use reach_harness::config::ExperimentConfig;
use reach_harness::pipeline::{self, BUNDLED_MAP_FILE, DATASET_FILE, MANIFEST_FILE, MAP_FILE, MODEL_FILE};
use reach_harness::report;
use reach_harness::sweep::{self, SweepKind};

fn smoke() -> ExperimentConfig {
    ExperimentConfig::planar_smoke()
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap()
}

#[test]
fn smoke_pipeline_runs_quickly_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/out");
    let t0 = Instant::now();
    let a = pipeline::run_pipeline(&smoke(), &out).unwrap();
    assert!(t0.elapsed().as_secs() < 60);
    for f in [DATASET_FILE, MODEL_FILE, MAP_FILE, BUNDLED_MAP_FILE, MANIFEST_FILE] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(a.hashes.len(), 4);
    let map = pipeline::load_map(&out, BUNDLED_MAP_FILE, reach_harness::error::Stage::Plan).unwrap();
    assert_eq!(*map.forward(), map.backward().transpose());
    assert_eq!(map.len(), a.map.len());
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let a = pipeline::run_pipeline(&smoke(), d1.path()).unwrap();
    let b = pipeline::run_pipeline(&smoke(), d2.path()).unwrap();
    assert_eq!(a.hashes, b.hashes);
    assert_eq!(read(d1.path(), MANIFEST_FILE), read(d2.path(), MANIFEST_FILE));
    let mut other = smoke();
    other.seed += 1;
    let d3 = tempfile::tempdir().unwrap();
    let c = pipeline::run_pipeline(&other, d3.path()).unwrap();
    assert_ne!(a.hashes[DATASET_FILE], c.hashes[DATASET_FILE]);
}

#[test]
fn staged_commands_match_the_one_shot_pipeline() {
    let cfg = smoke();
    let staged = tempfile::tempdir().unwrap();
    let out = staged.path();
    commands::babble(&cfg, out).unwrap();
    commands::train(&cfg, out).unwrap();
    commands::build_map(&cfg, out).unwrap();
    commands::bundle(&cfg, out).unwrap();
    let whole = tempfile::tempdir().unwrap();
    pipeline::run_pipeline(&cfg, whole.path()).unwrap();
    for f in [DATASET_FILE, MODEL_FILE, MAP_FILE, BUNDLED_MAP_FILE, MANIFEST_FILE] {
        assert_eq!(read(out, f), read(whole.path(), f), "{f}");
    }

    let trace = out.join("trace.csv");
    let r = commands::plan(&cfg, out, GoalSource::Trial(0), Some(&trace)).unwrap();
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,winner,chi_max,beta_goal"));
    assert_eq!(lines.count(), r.trace.len());
    assert!(out.join(commands::PLAN_FILE).is_file());
    assert!(commands::plan(&cfg, out, GoalSource::Trial(10_000), None).is_err());
}

#[test]
fn sweeps_are_reproducible_and_leave_artifacts_alone() {
    let cfg = smoke();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    pipeline::run_pipeline(&cfg, out).unwrap();
    let before: Vec<Vec<u8>> = [DATASET_FILE, MODEL_FILE, MAP_FILE, BUNDLED_MAP_FILE]
        .iter()
        .map(|f| read(out, f))
        .collect();
    let kinds = [SweepKind::Phi, SweepKind::TrainSize];
    commands::sweep(&cfg, out, &kinds).unwrap();
    let first = read(out, "sweep_phi.csv");
    commands::sweep(&cfg, out, &kinds).unwrap();
    assert_eq!(read(out, "sweep_phi.csv"), first);
    for (f, bytes) in [DATASET_FILE, MODEL_FILE, MAP_FILE, BUNDLED_MAP_FILE].iter().zip(&before) {
        assert_eq!(&read(out, f), bytes, "{f} changed");
    }

    let rows = sweep::read_rows(first.as_slice()).unwrap();
    let goals = cfg.protocol.n_test_per_start;
    assert_eq!(rows.len(), cfg.sweep.phi.values.len() * goals);
    assert!(rows.iter().all(|r| r.sweep_kind == "phi" && r.wall_ms == 0.0));
    assert!(out.join(sweep::TABLE_ONE_FILE).is_file());
    assert!(std::fs::read_dir(out)
        .unwrap()
        .any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    let path = commands::report(out).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.contains("phi"));
}

#[test]
fn report_handles_header_only_and_missing_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let empty = report::build_report(dir.path()).unwrap();
    assert!(!empty.is_empty());
    let f = std::fs::File::create(sweep::csv_path(dir.path(), SweepKind::Dim)).unwrap();
    sweep::write_records_with_header::<_, sweep::TrialRow>(f, &sweep::ROW_HEADER, &[]).unwrap();
    report::write_report(dir.path()).unwrap();
}

fn reach(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_reach"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn cli_runs_the_smoke_pipeline_and_reports_stage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let base = ["--preset", "planar-smoke", "--out", out_s];

    let missing = reach(&[&base[..], &["train"]].concat());
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error: [train]"));

    for cmd in ["babble", "train", "build-map", "bundle"] {
        let o = reach(&[&base[..], &[cmd]].concat());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let trace = dir.path().join("trace.csv");
    let o = reach(&[&base[..], &["plan", "--trial", "0", "--trace", trace.to_str().unwrap()]].concat());
    assert!(trace.is_file());
    assert!(o.status.success() || String::from_utf8_lossy(&o.stderr).contains("error: [plan]"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = \"x\"\n").unwrap();
    let o = reach(&["--config", bad.to_str().unwrap(), "babble"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error: [config]"));

    let o = reach(&[&base[..], &["sweep", "--kind", "width"]].concat());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error: [sweep]"));

    let o = reach(&["--preset", "planar-smoke", "--seed", "99", "config"]);
    assert!(o.status.success());
    let cfg = ExperimentConfig::from_toml(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(cfg.seed, 99);
}
