mod common;

use common::MockSetup;
use evoplace::bookshelf::{generate_synthetic, SyntheticSpec};
use evoplace::dsl::StrategyKind;
use evoplace::evolve::{run_evolution, EvolutionConfig, RunDir};
use evoplace::harness::report::{improvement_pct, pool_rows, report, EvolutionReport, ReportError, ReportFormat};
use evoplace::harness::{evaluate_batch, Evaluator, PoolRecord};
use evoplace::placer::{EvalResult, EvalStatus};
use evoplace::store::{read_jsonl, JsonlWriter};

fn two_cliques() -> evoplace::bookshelf::BenchmarkCase {
    generate_synthetic(&SyntheticSpec::two_cliques(), 0).unwrap()
}

fn ok(hpwl: f64) -> EvalResult {
    EvalResult {
        status: EvalStatus::Success,
        hpwl: Some(hpwl),
        runtime_s: 0.0,
        iterations: 10,
        overflow_final: Some(0.1),
        message: None,
    }
}

struct Crashy;

impl Evaluator for Crashy {
    fn evaluate(&self, _kind: StrategyKind, source: &str) -> EvalResult {
        if source.contains("boom") {
            panic!("evaluator bug");
        }
        ok(source.len() as f64)
    }
}

#[test]
fn batch_results_do_not_depend_on_workers() {
    let s = MockSetup::new(two_cliques(), 1);
    let programs: Vec<(StrategyKind, String)> = std::fs::read_dir(common::repo_root().join("strategies"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "strat"))
        .map(|p| {
            let src = std::fs::read_to_string(&p).unwrap();
            let kind = evoplace::dsl::parse_any_kind(&src).unwrap().kind();
            (kind, src)
        })
        .collect();
    assert!(programs.len() >= 20);
    let fresh = |workers| {
        let e = MockSetup::new(two_cliques(), 1).evaluator;
        evaluate_batch(&e, &programs, workers)
    };
    let one = fresh(1);
    assert_eq!(one, fresh(4));
    // Same again through a shared, already warm cache.
    assert_eq!(evaluate_batch(&s.evaluator, &programs, 3), one);
    assert_eq!(evaluate_batch(&s.evaluator, &programs, 3), one);
    assert!(one.iter().all(|r| r.status == EvalStatus::Success));
    assert!(evaluate_batch(&s.evaluator, &[], 4).is_empty());
}

#[test]
fn a_panicking_evaluation_is_an_error_result() {
    let batch = vec![
        (StrategyKind::Init, "fine".to_string()),
        (StrategyKind::Init, "boom".to_string()),
        (StrategyKind::Init, "also fine".to_string()),
    ];
    let out = evaluate_batch(&Crashy, &batch, 2);
    assert_eq!(out[0], ok(4.0));
    assert_eq!(out[1].status, EvalStatus::Error);
    assert!(out[1].hpwl.is_none());
    assert_eq!(out[2], ok(9.0));
}

#[test]
fn improvement_column_matches_hand_values() {
    let hpwls = [100.0, 90.0, 110.0, 50.0, 100.5];
    let records: Vec<PoolRecord> = hpwls
        .iter()
        .enumerate()
        .map(|(i, &h)| PoolRecord {
            id: format!("r{i}"),
            kind: StrategyKind::Init,
            source: Some(String::new()),
            eval: ok(h),
            embedding: None,
            failure: None,
        })
        .collect();
    let rows = pool_rows(&records, Some(100.0));
    let want = [0.0, 10.0, -10.0, 50.0, -0.5];
    for (r, w) in rows.iter().zip(want) {
        assert!((r.improvement_pct.unwrap() - w).abs() < 1e-12, "{} {w}", r.id);
    }
    assert_eq!(improvement_pct(61.0, 61.0), 0.0);
    assert!(pool_rows(&records, None).iter().all(|r| r.improvement_pct.is_none()));
}

fn evolved_dir() -> (tempfile::TempDir, f64) {
    let s = MockSetup::new(two_cliques(), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = EvolutionConfig {
        m: 4,
        trials: 12,
        seed: 2,
        ..EvolutionConfig::default()
    };
    let run = s.initial_run(StrategyKind::Init, 12, cfg, 2);
    run_evolution(&s.env(), run, Some(dir.path())).unwrap();
    (dir, s.baseline)
}

#[test]
fn evolution_report_curve_and_tables() {
    let (dir, baseline) = evolved_dir();
    let paths = report(dir.path(), &[ReportFormat::Csv, ReportFormat::Svg], None).unwrap();
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in ["curve.csv", "candidates.csv", "curve.svg", "scatter.svg"] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }

    let mut rdr = csv::Reader::from_path(dir.path().join("curve.csv")).unwrap();
    let curve: Vec<(usize, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert_eq!(curve.len(), 13);
    assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 == w[0].0 + 1));

    let svg = std::fs::read_to_string(dir.path().join("curve.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    // The baseline itself scores zero improvement.
    let history = read_jsonl(&RunDir::new(dir.path()).history()).unwrap();
    let mut rep = EvolutionReport::from_history(&history);
    assert_eq!(rep.baseline, Some(baseline));
    let best = rep.curve.last().unwrap().best_hpwl;
    rep.set_baseline(best);
    let row = rep.candidates.iter().find(|c| c.hpwl == Some(best)).unwrap();
    assert_eq!(row.improvement_pct, Some(0.0));
}

#[test]
fn corrupt_or_empty_run_dirs_are_errors() {
    let (dir, _) = evolved_dir();
    let hist = RunDir::new(dir.path()).history();
    let mut text = std::fs::read_to_string(&hist).unwrap();
    text.insert_str(text.find('\n').unwrap() + 1, "not json\n");
    std::fs::write(&hist, text).unwrap();
    match report(dir.path(), &[ReportFormat::Csv], None) {
        Err(ReportError::CorruptStore { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected CorruptStore, got {other:?}"),
    }

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        report(empty.path(), &[ReportFormat::Csv], None),
        Err(ReportError::Empty(_))
    ));
}

#[test]
fn pool_report_uses_stored_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![PoolRecord {
        id: "a".into(),
        kind: StrategyKind::Precond,
        source: Some(String::new()),
        eval: ok(80.0),
        embedding: None,
        failure: None,
    }];
    let w = JsonlWriter::create(&dir.path().join("pool.jsonl")).unwrap();
    for r in &records {
        w.append(r).unwrap();
    }
    std::fs::write(dir.path().join("baseline.json"), r#"{"hpwl": 100.0}"#).unwrap();
    report(dir.path(), &[ReportFormat::Csv], None).unwrap();
    let text = std::fs::read_to_string(dir.path().join("pool.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "improvement_pct").unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    assert_eq!(row[col].parse::<f64>().unwrap(), 20.0);
}
