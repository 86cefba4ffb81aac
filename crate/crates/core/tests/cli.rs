mod common;

use std::path::Path;

use evoplace::cli::run;
use evoplace::evolve::HistoryRecord;
use evoplace::harness::{DseRecord, PoolRecord};
use evoplace::store::read_jsonl;

fn toy() -> String {
    common::repo_root().join("cases/toy/toy.aux").display().to_string()
}

fn evoplace(out: &Path, args: &[&str]) -> i32 {
    let out = out.display().to_string();
    let mut v = vec!["evoplace", "--backend", "mock", "--workers", "2", "--out", out.as_str()];
    v.extend_from_slice(args);
    run(v)
}

#[test]
fn place_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let strat = common::repo_root().join("strategies/clustered_macro_init.strat");
    let strat = strat.display().to_string();
    for d in [&a, &b] {
        assert_eq!(evoplace(d.path(), &["place", "--case", &toy(), "--strat", &strat]), 0);
    }
    for f in ["toy.pl", "result.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let pl = std::fs::read_to_string(a.path().join("toy.pl")).unwrap();
    let rows = pl
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with("UCLA") && !l.starts_with('#'))
        .count();
    assert_eq!(rows, 11);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(evoplace(d.path(), &["frobnicate"]), 1);
    assert_eq!(evoplace(d.path(), &["gen", "--component", "nonsense"]), 1);
    assert_eq!(run(["evoplace", "--backend", "carrier-pigeon", "place"]), 1);
    assert_eq!(run(["evoplace", "--help"]), 0);
}

#[test]
fn runtime_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(evoplace(d.path(), &["place", "--case", "missing/nothing.aux"]), 2);
    assert_eq!(evoplace(d.path(), &["select"]), 2);
    assert_eq!(evoplace(d.path(), &["report"]), 2);
}

#[test]
fn mock_evolution_on_the_toy_case() {
    let d = tempfile::tempdir().unwrap();
    let code = evoplace(
        d.path(),
        &["evolve", "--case", &toy(), "--component", "precond", "--trials", "50", "-m", "4"],
    );
    assert_eq!(code, 0);
    let records: Vec<HistoryRecord> = read_jsonl(&d.path().join("history.jsonl")).unwrap();
    let trials = records.iter().filter(|r| matches!(r, HistoryRecord::Trial(_))).count();
    assert_eq!(trials, 50);
    assert!(d.path().join("best.strat").exists());
    let best = std::fs::read_to_string(d.path().join("best.strat")).unwrap();
    evoplace::dsl::parse_strategy(&best, evoplace::dsl::StrategyKind::Precond).unwrap();

    assert_eq!(evoplace(d.path(), &["report", "--format", "csv"]), 0);
    assert!(d.path().join("curve.csv").exists());
}

#[test]
fn gen_select_dse_report_flow() {
    let d = tempfile::tempdir().unwrap();
    let case = toy();
    assert_eq!(evoplace(d.path(), &["gen", "--case", &case, "--component", "init", "-n", "16"]), 0);
    let pool: Vec<PoolRecord> = read_jsonl(&d.path().join("pool.jsonl")).unwrap();
    assert_eq!(pool.len(), 16);

    assert_eq!(evoplace(d.path(), &["select", "-m", "4"]), 0);
    let chosen: Vec<PoolRecord> = read_jsonl(&d.path().join("selected.jsonl")).unwrap();
    assert_eq!(chosen.len(), 4);
    assert!(chosen.iter().all(|c| pool.contains(c)));

    assert_eq!(evoplace(d.path(), &["dse", "--case", &case, "--budget", "8"]), 0);
    let dse: Vec<DseRecord> = read_jsonl(&d.path().join("dse.jsonl")).unwrap();
    assert_eq!(dse.iter().filter(|r| matches!(r, DseRecord::Step(_))).count(), 8);

    assert_eq!(evoplace(d.path(), &["report"]), 0);
    for f in ["pool.csv", "dse.csv", "dse.svg"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_supplies_defaults() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, format!("case = {:?}\n[engine]\nmax_iters = 5\n", toy())).unwrap();
    let cfg = cfg.display().to_string();
    assert_eq!(evoplace(d.path(), &["--config", &cfg, "place"]), 0);
    let r: evoplace::placer::EvalResult =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("result.json")).unwrap()).unwrap();
    assert!(r.iterations <= 5);
}
