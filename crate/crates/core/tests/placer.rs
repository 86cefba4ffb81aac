mod common;

use common::{central_differences, movable_only, relative_error, scattered_state};
use evoplace::bookshelf::{generate_synthetic, SyntheticSpec};
use evoplace::dsl::{parse_strategy, StrategyBundle, StrategyKind};
use evoplace::placer::{
    default_init, density_penalty, hpwl, run_global_place, run_global_place_traced, smooth_wl, BinGrid,
    EngineConfig, EvalStatus, OptimizerState,
};
use proptest::prelude::*;

fn case50(seed: u64) -> evoplace::bookshelf::BenchmarkCase {
    generate_synthetic(&SyntheticSpec::random(50), seed).unwrap()
}

#[test]
fn smooth_wl_gradient_matches_differences() {
    for seed in 0..20 {
        let case = case50(seed);
        let s = scattered_state(&case, seed);
        let gamma = 0.02 * case.region().span();
        let g = movable_only(&case, smooth_wl(&case, &s, gamma));
        let (fx, fy) = central_differences(&case, &s, 1e-5, |t| smooth_wl(&case, t, gamma).value);
        let err = relative_error(&g.gx, &g.gy, &fx, &fy);
        assert!(err <= 1e-5, "seed {seed}: {err:e}");
    }
}

#[test]
fn density_gradient_matches_differences() {
    for seed in 0..20 {
        let case = case50(seed);
        let s = scattered_state(&case, 100 + seed);
        let mut grid = BinGrid::for_case(&case, 1.0);
        let g = movable_only(&case, density_penalty(&case, &s, &mut grid));
        assert!(g.value > 0.0);
        let (fx, fy) = central_differences(&case, &s, 1e-6, |t| density_penalty(&case, t, &mut grid).value);
        let err = relative_error(&g.gx, &g.gy, &fx, &fy);
        assert!(err <= 1e-4, "seed {seed}: {err:e}");
    }
}

#[test]
fn smooth_wl_bounds_hpwl_and_tightens() {
    let case = case50(3);
    let s = scattered_state(&case, 3);
    let h = hpwl(&case, &s);
    let mut last = f64::INFINITY;
    for gamma in [1.0, 0.3, 0.1, 0.03, 0.01] {
        let v = smooth_wl(&case, &s, gamma).value;
        assert!(v >= h - 1e-9);
        assert!(v <= last);
        last = v;
    }
    assert!((last - h) / h < 0.05);
}

#[test]
fn bb_step_is_inverse_curvature_on_quadratics() {
    for k in [0.1, 1.0, 3.0, 42.0] {
        // A first move of half the distance keeps the secant well conditioned.
        let mut opt = OptimizerState::new(vec![2.0], vec![true], 0.5 / k);
        for _ in 0..2 {
            let g = k * opt.v[0];
            opt.step(&[g], &[1.0]);
        }
        assert!(((opt.bb_step - 1.0 / k) * k).abs() <= 8.0 * f64::EPSILON, "k={k}");
    }
}

#[test]
fn two_cliques_improve_on_center_start() {
    let cfg = EngineConfig {
        max_iters: 500,
        ..EngineConfig::default()
    };
    let none = StrategyBundle::new();
    for seed in 0..10 {
        let case = generate_synthetic(&SyntheticSpec::two_cliques(), seed).unwrap();
        let start = hpwl(&case, &default_init(&case, seed));
        let r = run_global_place(&case, &none, &cfg, seed);
        assert_eq!(r.status, EvalStatus::Success, "seed {seed}: {:?}", r.message);
        let end = r.hpwl.unwrap();
        assert!(end <= 0.7 * start, "seed {seed}: {start} -> {end}");
        assert!(r.iterations <= 500);
    }
}

#[test]
fn identity_programs_reproduce_the_default_bitwise() {
    let case = generate_synthetic(&SyntheticSpec::random(80), 2).unwrap();
    let cfg = EngineConfig::default();
    let base = run_global_place(&case, &StrategyBundle::new(), &cfg, 4);
    let mut all = StrategyBundle::new();
    for kind in StrategyKind::ALL {
        let p = parse_strategy(kind.identity_source(), kind).unwrap();
        let one = StrategyBundle::new().with(p.clone());
        assert_eq!(run_global_place(&case, &one, &cfg, 4), base, "{kind}");
        all.set(p);
    }
    assert_eq!(run_global_place(&case, &all, &cfg, 4), base);
}

#[test]
fn same_seed_same_result_and_trace() {
    let case = generate_synthetic(&SyntheticSpec::random(60), 9).unwrap();
    let cfg = EngineConfig::default();
    let a = run_global_place_traced(&case, &StrategyBundle::new(), &cfg, 1);
    let b = run_global_place_traced(&case, &StrategyBundle::new(), &cfg, 1);
    assert_eq!(a.result, b.result);
    assert_eq!(a.state, b.state);
    assert_eq!(a.objective, b.objective);
}

#[test]
fn bad_strategies_become_errors_not_panics() {
    let case = generate_synthetic(&SyntheticSpec::random(30), 0).unwrap();
    let cfg = EngineConfig::default();
    let bad = [
        (StrategyKind::Init, "x_init = log(0 * area)\ny_init = center_y + 0 * area\n"),
        (StrategyKind::Precond, "diag_scale = sqrt(-1 - area)\n"),
        (StrategyKind::OptPolicy, "step_scale = 1 / (iteration - iteration)\nnoise_level = 0\nmomentum_scale = 1\n"),
    ];
    for (kind, src) in bad {
        let p = parse_strategy(src, kind).unwrap();
        let r = run_global_place(&case, &StrategyBundle::new().with(p), &cfg, 0);
        assert_eq!(r.status, EvalStatus::Error, "{kind}: {r:?}");
        assert!(r.message.is_some());
    }
}

#[test]
fn hpwl_blowup_is_reported_as_divergence() {
    // From a collapsed start HPWL grows several times over while cells
    // spread, so a factor of 2 trips the check and the default does not.
    let case = generate_synthetic(&SyntheticSpec::two_cliques(), 0).unwrap();
    let tight = EngineConfig {
        divergence_factor: 2.0,
        ..EngineConfig::default()
    };
    let r = run_global_place(&case, &StrategyBundle::new(), &tight, 0);
    assert_eq!(r.status, EvalStatus::Divergence, "{r:?}");
    assert!(r.success_hpwl().is_none());
    let calm = run_global_place(&case, &StrategyBundle::new(), &EngineConfig::default(), 0);
    assert_eq!(calm.status, EvalStatus::Success, "{calm:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hpwl_is_translation_invariant(seed in 0u64..1000, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let case = generate_synthetic(&SyntheticSpec::random(20), seed).unwrap();
        let s = scattered_state(&case, seed);
        let mut t = s.clone();
        t.x.iter_mut().for_each(|x| *x += dx);
        t.y.iter_mut().for_each(|y| *y += dy);
        let (a, b) = (hpwl(&case, &s), hpwl(&case, &t));
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn density_penalty_is_nonnegative(seed in 0u64..1000) {
        let case = generate_synthetic(&SyntheticSpec::random(25), seed).unwrap();
        let s = scattered_state(&case, seed ^ 7);
        let mut grid = BinGrid::for_case(&case, 1.0);
        prop_assert!(density_penalty(&case, &s, &mut grid).value >= 0.0);
    }
}
