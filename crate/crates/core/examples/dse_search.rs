//! Pretrains a surrogate on pools from two training cases, then searches a
//! pool on a third case with and without it, against random order.
//!
//!     cargo run --release --example dse_search -- [budget]

use evoplace::bookshelf::{generate_synthetic, BenchmarkCase, SyntheticSpec};
use evoplace::dse::{normalized_loss, pretrain_surrogate, random_order, DesignPoint, DseConfig, FusionMode, NetConfig, PriorMean};
use evoplace::dsl::{extract_features, StrategyBundle, StrategyKind};
use evoplace::harness::{design_points, evaluate_candidates, generate_candidates, run_pool_dse, PlacementEvaluator, PoolRecord};
use evoplace::llm::Gateway;
use evoplace::placer::EngineConfig;
use evoplace::prompt::{GenerationContext, TemplateSet};

fn pool(case: &BenchmarkCase, n: usize, seed: u64) -> (PlacementEvaluator, Vec<PoolRecord>) {
    let gateway = Gateway::mock(seed);
    let ctx = GenerationContext::new(StrategyKind::Init, extract_features(case).summary());
    let evaluator = PlacementEvaluator::new(case.clone(), StrategyBundle::new(), EngineConfig::default(), seed);
    let cands = generate_candidates(&gateway, &TemplateSet::default(), &ctx, n, seed);
    let records = evaluate_candidates(&gateway, &evaluator, &cands, 4);
    (evaluator, records)
}

/// Every pool member with its measured loss, for pretraining.
fn labelled(case: &BenchmarkCase, evaluator: &PlacementEvaluator, records: &[PoolRecord]) -> Vec<DesignPoint> {
    let base = evaluator.baseline().success_hpwl().expect("baseline places");
    let digest = extract_features(case).digest();
    design_points(records, &digest)
        .into_iter()
        .filter_map(|(mut p, _, _)| {
            let r = records.iter().find(|r| r.id == p.id)?;
            p.y = Some(r.eval.success_hpwl().map_or(1.0, |h| normalized_loss(h, base)));
            Some(p)
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    let budget: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(12);

    let mut corpus = Vec::new();
    for (spec, seed) in [(SyntheticSpec::random(60), 1), (SyntheticSpec::two_cliques(), 2)] {
        let case = generate_synthetic(&spec, seed)?;
        let (ev, records) = pool(&case, 40, seed);
        corpus.extend(labelled(&case, &ev, &records));
    }
    let (net, curve) = pretrain_surrogate(&corpus, &NetConfig::default())?;
    println!(
        "surrogate: {} points, {} params, loss {:.5} -> {:.5}",
        corpus.len(),
        net.param_count(),
        curve.first().copied().unwrap_or(f64::NAN),
        curve.last().copied().unwrap_or(f64::NAN)
    );

    let case = generate_synthetic(&SyntheticSpec::two_cliques(), 9)?;
    let (evaluator, records) = pool(&case, 60, 9);
    let digest = extract_features(&case).digest();
    let truth = labelled(&case, &evaluator, &records);
    let best = truth.iter().map(|p| p.y.unwrap()).fold(f64::INFINITY, f64::min);
    println!("target pool: {} candidates, best loss {best:.5}", truth.len());

    for (name, fusion, prior) in [
        ("gp only", FusionMode::Raw, None),
        ("gp + surrogate", FusionMode::Residual, Some(&net as &dyn PriorMean)),
    ] {
        let cfg = DseConfig {
            budget,
            fusion,
            ..DseConfig::default()
        };
        let out = run_pool_dse(&evaluator, &records, &digest, &cfg, prior, None)?;
        let found = out.steps.iter().position(|s| s.y <= best).map_or("-".into(), |p| (p + 1).to_string());
        println!("{name:<15} best {:.5} after {budget} evals, optimum hit at eval {found}", out.best_step().y);
    }
    let order = random_order(truth.len(), budget, 0);
    let rnd = order.iter().map(|&i| truth[i].y.unwrap()).fold(f64::INFINITY, f64::min);
    println!("{:<15} best {rnd:.5} after {budget} evals", "random");
    Ok(())
}
