mod common;

use common::{play_bandit, with_workers, MockSetup};
use evoplace::bookshelf::{generate_synthetic, SyntheticSpec};
use evoplace::dsl::StrategyKind;
use evoplace::evolve::{run_evolution, EvolutionConfig, EvolveError, HistoryRecord, RunDir, TimingRecord};
use evoplace::store::read_jsonl;

fn setup(seed: u64) -> MockSetup {
    MockSetup::new(generate_synthetic(&SyntheticSpec::two_cliques(), 0).unwrap(), seed)
}

fn config(seed: u64, trials: usize, fanout: usize) -> EvolutionConfig {
    EvolutionConfig {
        m: 4,
        trials,
        fanout,
        seed,
        ..EvolutionConfig::default()
    }
}

#[test]
fn ucb_prefers_the_better_arm() {
    let mut good = 0;
    for seed in 0..20 {
        let run = play_bandit(&[0.8, 0.2], 1000, 1.0, seed);
        let share = run.pulls.iter().filter(|&&a| a == 0).count() as f64 / 1000.0;
        good += usize::from(share >= 0.7);
        assert!(run.regret[999] / 1000.0 < 0.5 * run.regret[99] / 100.0, "seed {seed}");
    }
    assert!(good >= 18, "{good}/20");
}

#[test]
fn history_is_identical_across_worker_counts() {
    let run_with = |workers: usize| {
        let dir = tempfile::tempdir().unwrap();
        with_workers(workers, || {
            let s = setup(3);
            let run = s.initial_run(StrategyKind::Init, 12, config(3, 12, 2), workers);
            run_evolution(&s.env(), run, Some(dir.path())).unwrap();
        });
        std::fs::read(RunDir::new(dir.path()).history()).unwrap()
    };
    let one = run_with(1);
    assert_eq!(one, run_with(4));
    assert_eq!(one, run_with(1));
}

#[test]
fn resume_after_interruption_matches_uninterrupted_run() {
    let s = setup(5);
    let full_dir = tempfile::tempdir().unwrap();
    let run = s.initial_run(StrategyKind::OptPolicy, 12, config(5, 16, 1), 2);
    let full = run_evolution(&s.env(), run.clone(), Some(full_dir.path())).unwrap();

    // Keep the header and 7 trials, plus a torn partial line as a crash
    // would leave.
    let dir = tempfile::tempdir().unwrap();
    let hist = RunDir::new(dir.path()).history();
    let text = std::fs::read_to_string(RunDir::new(full_dir.path()).history()).unwrap();
    let mut cut: String = text.split_inclusive('\n').take(8).collect();
    cut.push_str("{\"record\":\"trial\",\"tri");
    std::fs::write(&hist, cut).unwrap();

    let resumed = run_evolution(&s.env(), run, Some(dir.path())).unwrap();
    assert_eq!(resumed.run, full.run);
    assert_eq!(resumed.history, full.history);
    assert_eq!(
        std::fs::read(&hist).unwrap(),
        std::fs::read(RunDir::new(full_dir.path()).history()).unwrap()
    );
}

#[test]
fn extending_a_finished_run_continues_its_trials() {
    let s = setup(4);
    let run = s.initial_run(StrategyKind::Init, 12, config(4, 12, 1), 2);
    let full = run_evolution(&s.env(), run.clone(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut short = run.clone();
    short.config.trials = 5;
    run_evolution(&s.env(), short, Some(dir.path())).unwrap();
    let extended = run_evolution(&s.env(), run, Some(dir.path())).unwrap();
    assert_eq!(extended.history, full.history);
    assert_eq!(extended.run.population, full.run.population);
}

#[test]
fn resume_refuses_a_different_run() {
    let s = setup(6);
    let dir = tempfile::tempdir().unwrap();
    let run = s.initial_run(StrategyKind::Precond, 12, config(6, 3, 1), 1);
    run_evolution(&s.env(), run.clone(), Some(dir.path())).unwrap();
    let mut other = run;
    other.config.lambda = 2.0;
    assert!(matches!(
        run_evolution(&s.env(), other, Some(dir.path())),
        Err(EvolveError::Mismatch(_))
    ));
}

#[test]
fn history_layout_and_side_logs() {
    let s = setup(7);
    let dir = tempfile::tempdir().unwrap();
    let run = s.initial_run(StrategyKind::Init, 12, config(7, 10, 2), 2);
    let out = run_evolution(&s.env(), run, Some(dir.path())).unwrap();
    let rd = RunDir::new(dir.path());
    let records: Vec<HistoryRecord> = read_jsonl(&rd.history()).unwrap();
    assert_eq!(records.len(), 11);
    assert!(matches!(&records[0], HistoryRecord::Header { baseline: Some(_), .. }));
    let mut last_best = f64::INFINITY;
    for (t, r) in records[1..].iter().enumerate() {
        let HistoryRecord::Trial(tr) = r else { panic!("trial expected") };
        assert_eq!(tr.trial, t);
        assert_eq!(tr.chains.len(), 2);
        assert!(tr.best_hpwl <= last_best);
        last_best = tr.best_hpwl;
    }
    assert_eq!(last_best, out.best().hpwl());
    let timings: Vec<TimingRecord> = read_jsonl(&rd.timings()).unwrap();
    assert_eq!(timings.len(), 20);
    assert!(rd.population().exists());
}

#[test]
fn best_never_gets_worse_and_beats_nothing_worse_than_start() {
    let s = setup(8);
    let run = s.initial_run(StrategyKind::Init, 16, config(8, 30, 1), 2);
    let start = run.best().hpwl();
    let out = run_evolution(&s.env(), run, None).unwrap();
    assert!(out.best().hpwl() <= start);
    assert_eq!(out.history.len(), 30);
    let pop = &out.run.population;
    assert!(pop.windows(2).all(|w| w[0].hpwl() <= w[1].hpwl()));
    let mut ids: Vec<_> = pop.iter().map(|m| &m.id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), pop.len());
}
