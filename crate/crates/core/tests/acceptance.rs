//! The nine acceptance criteria at their stated tolerances. Each test
//! writes one `criterion N ... PASS|FAIL` line straight to stdout, past the
//! harness capture, so the summary shows up in plain `cargo test` output.

mod common;

use std::io::Write;
use std::time::Instant;

use common::*;
use evoplace::bookshelf::{generate_synthetic, parse_case, write_case, SyntheticSpec};
use evoplace::dse::{
    expected_improvement, gp_fit, gp_predict, pretrain_surrogate, random_order, run_dse, evaluations_to_hit,
    DseConfig, KernelParams, NetConfig,
};
use evoplace::dsl::{parse_strategy, StrategyBundle, StrategyKind};
use evoplace::evolve::{run_evolution, EvolutionConfig, RunDir};
use evoplace::llm::mock_generate;
use evoplace::placer::{
    default_init, density_penalty, hpwl, run_global_place, smooth_wl, BinGrid, EngineConfig, EvalStatus,
    OptimizerState,
};
use evoplace::select::{select_diverse, CandidatePool};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {n} {name:<22} {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_gradients() {
    let t = Instant::now();
    let (mut wl, mut dens) = (0.0f64, 0.0f64);
    for seed in 0..20 {
        let case = generate_synthetic(&SyntheticSpec::random(50), seed).unwrap();
        let s = scattered_state(&case, seed);
        let gamma = 0.02 * case.region().span();
        let g = movable_only(&case, smooth_wl(&case, &s, gamma));
        let (fx, fy) = central_differences(&case, &s, 1e-5, |t| smooth_wl(&case, t, gamma).value);
        wl = wl.max(relative_error(&g.gx, &g.gy, &fx, &fy));

        let s = scattered_state(&case, 100 + seed);
        let mut grid = BinGrid::for_case(&case, 1.0);
        let g = movable_only(&case, density_penalty(&case, &s, &mut grid));
        let (fx, fy) = central_differences(&case, &s, 1e-6, |t| density_penalty(&case, t, &mut grid).value);
        dens = dens.max(relative_error(&g.gx, &g.gy, &fx, &fy));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        1,
        "gradients",
        wl <= 1e-5 && dens <= 1e-4 && secs < 60.0,
        format!("max rel err wl {wl:.2e} density {dens:.2e}, {secs:.1}s"),
    );
}

#[test]
fn criterion_2_optimizer() {
    let mut bb_err = 0.0f64;
    for k in [0.1, 1.0, 3.0, 42.0] {
        let mut opt = OptimizerState::new(vec![2.0], vec![true], 0.5 / k);
        for _ in 0..2 {
            let g = k * opt.v[0];
            opt.step(&[g], &[1.0]);
        }
        bb_err = bb_err.max(((opt.bb_step - 1.0 / k) * k).abs());
    }
    let cfg = EngineConfig {
        max_iters: 500,
        ..EngineConfig::default()
    };
    let mut worst = f64::INFINITY;
    let mut all_ok = true;
    for seed in 0..10 {
        let case = generate_synthetic(&SyntheticSpec::two_cliques(), seed).unwrap();
        let start = hpwl(&case, &default_init(&case, seed));
        let r = run_global_place(&case, &StrategyBundle::new(), &cfg, seed);
        all_ok &= r.status == EvalStatus::Success && r.iterations <= 500;
        worst = worst.min(r.hpwl.map_or(f64::NEG_INFINITY, |h| 1.0 - h / start));
    }
    verdict(
        2,
        "optimizer",
        bb_err <= 8.0 * f64::EPSILON && all_ok && worst >= 0.3,
        format!("bb rel err {bb_err:.1e}, worst reduction {:.1}% over 10 seeds", 100.0 * worst),
    );
}

#[test]
fn criterion_3_selection() {
    let mut worst = f64::INFINITY;
    let mut argmax_kept = 0;
    let mut top_m = 0;
    for seed in 0..100 {
        let members = selection_pool(12, seed);
        let pool = CandidatePool::new(members.clone());
        let greedy = select_diverse(&pool, 4, 12, 0.5, 0.5).unwrap();
        worst = worst.min(objective_oracle(&members, &greedy, 0.5) / exhaustive_optimum(&members, 4, 0.5));
        let f = scores_oracle(&members);
        let best = (0..12).max_by(|&a, &b| f[a].total_cmp(&f[b]).then(b.cmp(&a))).unwrap();
        argmax_kept += usize::from(greedy.contains(&best));

        let mut got = select_diverse(&pool, 4, 12, 0.0, 0.0).unwrap();
        got.sort();
        let mut order: Vec<usize> = (0..12).collect();
        order.sort_by(|&a, &b| members[a].hpwl.total_cmp(&members[b].hpwl).then(members[a].id.cmp(&members[b].id)));
        let mut want = order[..4].to_vec();
        want.sort();
        top_m += usize::from(got == want);
    }
    verdict(
        3,
        "selection",
        worst >= 0.9 && argmax_kept == 100 && top_m == 100,
        format!("worst ratio {worst:.4}, argmax kept {argmax_kept}/100, top-m {top_m}/100"),
    );
}

#[test]
fn criterion_4_ucb() {
    let mut good = 0;
    let mut sublinear = 0;
    for seed in 0..20 {
        let run = play_bandit(&[0.8, 0.2], 1000, 1.0, seed);
        let share = run.pulls.iter().filter(|&&a| a == 0).count() as f64 / 1000.0;
        good += usize::from(share >= 0.7);
        sublinear += usize::from(run.regret[999] / 1000.0 < 0.5 * run.regret[99] / 100.0);
    }
    verdict(
        4,
        "ucb",
        good >= 18 && sublinear == 20,
        format!("better arm >= 70% in {good}/20, regret halves in {sublinear}/20"),
    );
}

#[test]
fn criterion_5_gp_ei_surrogate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut gp_err = 0.0f64;
    for n in [1usize, 5, 12, 30, 50] {
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1] * x[2]).collect();
        let p = KernelParams {
            length_scale: 0.4,
            signal_var: 0.8,
            noise_var: 1e-4,
        };
        let m = gp_fit(&xs, &ys, p).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.2..1.2)).collect();
            let (mu, s) = gp_predict(&m, &x);
            let (mu_o, s_o) = oracle_predict(&xs, &ys, &p, m.jitter, &x);
            gp_err = gp_err.max((mu - mu_o).abs()).max((s * s - s_o * s_o).abs());
        }
    }

    let ei_exact = expected_improvement(0.2, 0.0, 1.0, 0.1) == 1.0 - 0.2 - 0.1
        && expected_improvement(0.95, 0.0, 1.0, 0.1) == 0.0
        && expected_improvement(3.0, 0.0, 1.0, 0.0) == 0.0
        && (expected_improvement(0.5, 2.0, 0.5, 0.0) - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15;

    let data = corpus(60, 3, linear);
    let cfg = NetConfig {
        epochs: 5,
        ..NetConfig::default()
    };
    let (mut net, _) = pretrain_surrogate(&data, &cfg).unwrap();
    let batch: Vec<_> = data.iter().take(8).collect();
    let (_, grad) = net.loss_and_grad(&batch);
    let base = net.params();
    let mut net_err = 0.0f64;
    for k in (0..base.len()).step_by(base.len() / 20 + 1) {
        let h = 1e-5;
        let mut p = base.clone();
        p[k] = base[k] + h;
        net.set_params(&p).unwrap();
        let up = net.loss_and_grad(&batch).0;
        p[k] = base[k] - h;
        net.set_params(&p).unwrap();
        let down = net.loss_and_grad(&batch).0;
        let fd = (up - down) / (2.0 * h);
        net_err = net_err.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6));
    }
    net.set_params(&base).unwrap();

    verdict(
        5,
        "gp/ei/surrogate",
        gp_err <= 1e-8 && ei_exact && net_err <= 1e-4,
        format!("gp max err {gp_err:.1e}, ei exact {ei_exact}, net grad rel err {net_err:.1e}"),
    );
}

#[test]
fn criterion_6_dse_efficiency() {
    const BUDGET: usize = 60;
    let (mut dse_hits, mut rnd_hits) = (Vec::new(), Vec::new());
    let mut found_best = 0;
    for seed in 0..50u64 {
        let (pool, ys) = planted_pool(200, 7000 + seed);
        let targets = top_fraction(&ys, 0.03);
        let cfg = DseConfig {
            budget: BUDGET,
            seed,
            ..DseConfig::default()
        };
        let out = run_dse(&pool, &cfg, None, |p| Ok(ys[pool_index(p)])).unwrap();
        // A miss within the budget counts as BUDGET + 1. The median stays
        // exact while fewer than half the seeds miss.
        let hit = evaluations_to_hit(&out.order(), &targets).unwrap_or(BUDGET + 1);
        dse_hits.push(hit as f64);
        let order = random_order(pool.len(), pool.len(), seed);
        rnd_hits.push(evaluations_to_hit(&order, &targets).unwrap() as f64);
        found_best += usize::from(out.best_step().index == argmin(&ys));
    }
    let misses = dse_hits.iter().filter(|&&h| h > BUDGET as f64).count();
    let (d, r) = (median(&dse_hits), median(&rnd_hits));
    verdict(
        6,
        "dse efficiency",
        misses < 25 && d < r && found_best >= 40,
        format!("median evals to top 3%: dse {d} vs random {r}; best found {found_best}/50 at N=60"),
    );
}

#[test]
fn criterion_7_mock_evolution() {
    let t = Instant::now();
    let mut gains = Vec::new();
    for seed in 0..10u64 {
        let case = generate_synthetic(&SyntheticSpec::two_cliques(), seed).unwrap();
        let s = MockSetup::new(case, seed);
        let cfg = EvolutionConfig {
            m: 6,
            trials: 200,
            seed,
            ..EvolutionConfig::default()
        };
        let run = s.initial_run(StrategyKind::Init, 24, cfg, 4);
        let out = run_evolution(&s.env(), run, None).unwrap();
        gains.push(100.0 * (s.baseline - out.best().hpwl()) / s.baseline);
    }
    let secs = t.elapsed().as_secs_f64();
    let med = median(&gains);
    verdict(
        7,
        "mock evolution",
        med >= 3.0 && secs <= 600.0,
        format!("median improvement {med:.2}% (need 3%), range {:.2}..{:.2}%, {secs:.0}s",
            gains.iter().copied().fold(f64::INFINITY, f64::min),
            gains.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    );
}

#[test]
fn criterion_8_determinism_and_replay() {
    let setup = || MockSetup::new(generate_synthetic(&SyntheticSpec::two_cliques(), 1).unwrap(), 1);
    let cfg = |trials| EvolutionConfig {
        m: 6,
        trials,
        fanout: 2,
        seed: 1,
        ..EvolutionConfig::default()
    };
    let history = |workers: usize| {
        let dir = tempfile::tempdir().unwrap();
        with_workers(workers, || {
            let s = setup();
            let run = s.initial_run(StrategyKind::Init, 24, cfg(30), workers);
            run_evolution(&s.env(), run, Some(dir.path())).unwrap();
        });
        std::fs::read(RunDir::new(dir.path()).history()).unwrap()
    };
    let a = history(1);
    let same_twice = a == history(1);
    let same_workers = a == history(4);

    // Kill after 15 trials: header plus 15 records and a torn line.
    let s = setup();
    let dir = tempfile::tempdir().unwrap();
    let hist = RunDir::new(dir.path()).history();
    let text = String::from_utf8(a.clone()).unwrap();
    let mut cut: String = text.split_inclusive('\n').take(16).collect();
    cut.push_str("{\"record\":\"tr");
    std::fs::write(&hist, cut).unwrap();
    let run = s.initial_run(StrategyKind::Init, 24, cfg(30), 2);
    run_evolution(&s.env(), run, Some(dir.path())).unwrap();
    let resumed = std::fs::read(&hist).unwrap() == a;

    verdict(
        8,
        "determinism/replay",
        same_twice && same_workers && resumed,
        format!("rerun identical {same_twice}, workers 1 vs 4 identical {same_workers}, resume identical {resumed}"),
    );
}

#[test]
fn criterion_9_formats() {
    let cases = toy_cases();
    let mut exact = 0;
    for aux in &cases {
        let a = parse_case(aux).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let b = parse_case(write_case(&a, None, dir.path(), a.name()).unwrap()).unwrap();
        exact += usize::from(
            a.cells() == b.cells() && a.nets() == b.nets() && a.region() == b.region() && a.name() == b.name(),
        );
    }
    let mut worst = 1000;
    for kind in StrategyKind::ALL {
        let ok = (0..1000u64)
            .filter(|&s| parse_strategy(&mock_generate(s, kind), kind).is_ok())
            .count();
        worst = worst.min(ok);
    }
    verdict(
        9,
        "format fidelity",
        !cases.is_empty() && exact == cases.len() && worst >= 950,
        format!("roundtrip exact {exact}/{}, worst mock feasibility {worst}/1000", cases.len()),
    );
}
