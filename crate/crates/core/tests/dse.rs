mod common;

use common::{argmin, corpus, linear, oracle_predict, planted_pool};
use evoplace::dse::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gp_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1usize, 5, 12, 30, 50] {
        let dim = 3;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1] * x[2]).collect();
        let p = KernelParams {
            length_scale: 0.4,
            signal_var: 0.8,
            noise_var: 1e-4,
        };
        let m = gp_fit(&xs, &ys, p).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.2..1.2)).collect();
            let (mu, s) = gp_predict(&m, &x);
            let (mu_o, s_o) = oracle_predict(&xs, &ys, &p, m.jitter, &x);
            assert!((mu - mu_o).abs() < 1e-8, "n={n} mu {mu} vs {mu_o}");
            assert!((s * s - s_o * s_o).abs() < 1e-8, "n={n} var {} vs {}", s * s, s_o * s_o);
        }
    }
}

#[test]
fn gp_five_point_1d() {
    let xs: Vec<Vec<f64>> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&v| vec![v]).collect();
    let ys = [1.0, 0.3, -0.2, 0.4, 0.9];
    let p = KernelParams {
        length_scale: 0.3,
        signal_var: 0.5,
        noise_var: 1e-4,
    };
    let m = gp_fit(&xs, &ys, p).unwrap();
    for x in [0.1, 0.33, 0.6, 0.9] {
        let (mu, s) = gp_predict(&m, &[x]);
        let (mu_o, s_o) = oracle_predict(&xs, &ys, &p, m.jitter, &[x]);
        assert!((mu - mu_o).abs() < 1e-8);
        assert!((s - s_o).abs() < 1e-8);
    }
}

#[test]
fn gp_far_field_reverts_to_prior() {
    let xs = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.3, 0.9]];
    let ys = [0.2, 0.6, 0.4];
    let p = KernelParams {
        length_scale: 0.5,
        signal_var: 0.7,
        noise_var: 1e-4,
    };
    let m = gp_fit(&xs, &ys, p).unwrap();
    let (mu, s) = gp_predict(&m, &[50.0, -50.0]);
    assert!((mu - m.prior_mean).abs() < 1e-6);
    assert!((s * s - (p.signal_var + p.noise_var)).abs() < 1e-6);
}

#[test]
fn gp_interpolates_and_is_symmetric() {
    let xs = vec![vec![-1.0], vec![0.0], vec![1.0]];
    let ys = [0.5, 0.0, 0.5];
    let p = KernelParams {
        length_scale: 0.8,
        signal_var: 1.0,
        noise_var: 1e-6,
    };
    let m = gp_fit(&xs, &ys, p).unwrap();
    for (x, y) in xs.iter().zip(ys) {
        assert!((gp_predict(&m, x).0 - y).abs() < 1e-4);
    }
    for x in [0.2, 0.55, 1.7] {
        let (a, sa) = gp_predict(&m, &[x]);
        let (b, sb) = gp_predict(&m, &[-x]);
        assert!((a - b).abs() < 1e-12 && (sa - sb).abs() < 1e-12);
    }
}

#[test]
fn jitter_rescues_then_gives_up() {
    let p = KernelParams {
        length_scale: 1.0,
        signal_var: 1.0,
        noise_var: 0.0,
    };
    let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 1e-3]).collect();
    let ys: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let m = gp_fit(&xs, &ys, p).unwrap();
    assert!(m.jitter >= JITTER_START && m.jitter <= JITTER_MAX);
    let huge = KernelParams {
        signal_var: 1e14,
        ..p
    };
    assert_eq!(gp_fit(&xs, &ys, huge).unwrap_err(), DseError::SingularCovariance);
}

proptest! {
    #[test]
    fn ei_is_nonnegative(mu in -5.0f64..5.0, sigma in 0.0f64..3.0, best in -5.0f64..5.0, xi in 0.0f64..0.5) {
        prop_assert!(expected_improvement(mu, sigma, best, xi) >= 0.0);
    }

    #[test]
    fn ei_zero_when_certain_and_no_gain(mu in -5.0f64..5.0, best in -5.0f64..5.0, xi in 0.0f64..0.5) {
        prop_assume!(mu >= best - xi);
        prop_assert_eq!(expected_improvement(mu, 0.0, best, xi), 0.0);
    }
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let data = corpus(60, 3, linear);
    let cfg = NetConfig {
        epochs: 5,
        ..NetConfig::default()
    };
    let (mut net, _) = pretrain_surrogate(&data, &cfg).unwrap();
    let batch: Vec<&DesignPoint> = data.iter().take(8).collect();
    let (_, grad) = net.loss_and_grad(&batch);
    let base = net.params();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let k = rng.random_range(0..base.len());
        let h = 1e-5;
        let mut p = base.clone();
        p[k] = base[k] + h;
        net.set_params(&p).unwrap();
        let up = net.loss_and_grad(&batch).0;
        p[k] = base[k] - h;
        net.set_params(&p).unwrap();
        let down = net.loss_and_grad(&batch).0;
        net.set_params(&base).unwrap();
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
        assert!(rel <= 1e-4, "param {k}: analytic {} fd {fd}", grad[k]);
    }
}

#[test]
fn surrogate_learns_linear_teacher() {
    let train = corpus(200, 1, linear);
    let test = corpus(50, 2, linear);
    let (net, curve) = pretrain_surrogate(&train, &NetConfig::default()).unwrap();
    assert_eq!(curve.len(), 200);
    assert!(curve.last().unwrap() < &curve[0]);
    let rmse = (test.iter().map(|p| (net.predict(p) - p.y.unwrap()).powi(2)).sum::<f64>() / test.len() as f64).sqrt();
    assert!(rmse <= 0.05, "held-out rmse {rmse}");
}

#[test]
fn surrogate_constant_corpus() {
    let data = corpus(60, 4, |_, _| 0.42);
    let (net, _) = pretrain_surrogate(&data, &NetConfig::default()).unwrap();
    let rmse = (data.iter().map(|p| (net.predict(p) - 0.42).powi(2)).sum::<f64>() / 60.0).sqrt();
    assert!(rmse <= 1e-3, "rmse {rmse}");
}

#[test]
fn surrogate_rejects_small_corpus_and_is_deterministic() {
    let small = corpus(10, 5, linear);
    assert!(matches!(
        pretrain_surrogate(&small, &NetConfig::default()),
        Err(DseError::CorpusTooSmall { .. })
    ));
    let data = corpus(60, 5, linear);
    let cfg = NetConfig {
        epochs: 10,
        ..NetConfig::default()
    };
    let a = pretrain_surrogate(&data, &cfg).unwrap();
    let b = pretrain_surrogate(&data, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn surrogate_file_roundtrip() {
    let data = corpus(60, 6, linear);
    let cfg = NetConfig {
        epochs: 3,
        ..NetConfig::default()
    };
    let (net, _) = pretrain_surrogate(&data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    net.save(&path).unwrap();
    let back = SurrogateNet::load(&path).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.header().layers, vec![[3, 64], [64, 32], [36, 32], [32, 1]]);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(matches!(SurrogateNet::from_bytes(&bytes), Err(DseError::BadSurrogate(_))));
}

#[test]
fn planted_best_found_with_small_budget() {
    let mut hits = 0;
    for seed in 0..50 {
        let (pool, ys) = planted_pool(100, 1000 + seed);
        let cfg = DseConfig {
            budget: 15,
            seed,
            ..DseConfig::default()
        };
        let out = run_dse(&pool, &cfg, None, |p| Ok(ys[p.id[1..].parse::<usize>().unwrap()])).unwrap();
        hits += usize::from(out.best_step().index == argmin(&ys));
    }
    assert!(hits >= 45, "best found in {hits}/50");
}

#[test]
fn full_budget_is_exhaustive() {
    let (pool, ys) = planted_pool(40, 7);
    let cfg = DseConfig {
        budget: 40,
        ..DseConfig::default()
    };
    let out = run_dse(&pool, &cfg, None, |p| Ok(ys[p.id[1..].parse::<usize>().unwrap()])).unwrap();
    assert_eq!(out.best_step().index, argmin(&ys));
    let mut order = out.order();
    order.sort();
    assert_eq!(order, (0..40).collect::<Vec<_>>());
}

#[test]
fn exact_prior_needs_one_acquisition() {
    for seed in 0..10 {
        let (pool, ys) = planted_pool(100, 50 + seed);
        let truth = |p: &DesignPoint| ys[p.id[1..].parse::<usize>().unwrap()];
        let cfg = DseConfig {
            budget: 6,
            seed,
            noise_var: 1e-10,
            ..DseConfig::default()
        };
        let out = run_dse(&pool, &cfg, Some(&truth), |p| Ok(truth(p))).unwrap();
        assert_eq!(out.steps[5].index, argmin(&ys), "seed {seed}");
    }
}

#[test]
fn failures_score_worst() {
    let (pool, ys) = planted_pool(30, 8);
    let cfg = DseConfig {
        budget: 10,
        ..DseConfig::default()
    };
    let out = run_dse(&pool, &cfg, None, |p| {
        let i: usize = p.id[1..].parse().unwrap();
        if i % 3 == 0 {
            Err("placer error".into())
        } else {
            Ok(ys[i])
        }
    })
    .unwrap();
    for s in &out.steps {
        if s.index % 3 == 0 {
            assert_eq!(s.y, FAILURE_LOSS);
            assert!(s.failure.is_some());
        }
    }
}

#[test]
fn residual_and_raw_modes_both_run() {
    let (pool, ys) = planted_pool(80, 9);
    let truth = |p: &DesignPoint| ys[p.id[1..].parse::<usize>().unwrap()];
    let half = |p: &DesignPoint| 0.5 * truth(p) + 0.25;
    for fusion in [FusionMode::Residual, FusionMode::Raw] {
        let cfg = DseConfig {
            budget: 20,
            fusion,
            ..DseConfig::default()
        };
        let out = run_dse(&pool, &cfg, Some(&half), |p| Ok(truth(p))).unwrap();
        assert_eq!(out.steps.len(), 20);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn never_evaluates_twice(seed in 0u64..1000, n in 10usize..60, budget_frac in 0.1f64..1.0) {
        let (pool, ys) = planted_pool(n, seed);
        let budget = ((n as f64 * budget_frac) as usize).max(1);
        let cfg = DseConfig { budget, seed, ..DseConfig::default() };
        let out = run_dse(&pool, &cfg, None, |p| Ok(ys[p.id[1..].parse::<usize>().unwrap()])).unwrap();
        let mut order = out.order();
        prop_assert_eq!(order.len(), budget);
        order.sort();
        order.dedup();
        prop_assert_eq!(order.len(), budget);
    }
}
