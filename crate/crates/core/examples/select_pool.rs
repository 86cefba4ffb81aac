//! Generates a mock candidate pool, evaluates it, and compares greedy
//! diversity-aware selection with plain top-m and the exhaustive optimum.
//!
//!     cargo run --example select_pool -- [pool size] [m]

use evoplace::bookshelf::{generate_synthetic, SyntheticSpec};
use evoplace::dsl::{extract_features, StrategyBundle, StrategyKind};
use evoplace::harness::{evaluate_candidates, generate_candidates, PlacementEvaluator};
use evoplace::llm::Gateway;
use evoplace::placer::EngineConfig;
use evoplace::prompt::{GenerationContext, TemplateSet};
use evoplace::select::{brute_force_select, select_diverse, subset_objective, CandidatePool};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(14);
    let m: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);

    let case = generate_synthetic(&SyntheticSpec::two_cliques(), 0)?;
    let ctx = GenerationContext::new(StrategyKind::Init, extract_features(&case).summary());
    let gateway = Gateway::mock(11);
    let evaluator = PlacementEvaluator::new(case, StrategyBundle::new(), EngineConfig::default(), 0);
    let cands = generate_candidates(&gateway, &TemplateSet::default(), &ctx, n, 11);
    let records = evaluate_candidates(&gateway, &evaluator, &cands, 4);

    let pool = CandidatePool::from_results(
        records
            .iter()
            .filter(|r| r.eval.is_success())
            .filter_map(|r| Some((r.id.as_str(), &r.eval, r.embedding.as_ref()?))),
    );
    println!("{} of {} candidates placed", pool.members().len(), records.len());
    let scores = pool.scores();
    for &i in &pool.ranking() {
        let p = &pool.members()[i];
        println!("  {:>18}  hpwl {:8.3}  score {:.3}", p.id, p.hpwl, scores[i]);
    }

    let alpha = 0.5;
    let show = |name: &str, set: &[usize]| -> anyhow::Result<()> {
        let ids: Vec<&str> = set.iter().map(|&i| pool.members()[i].id.as_str()).collect();
        println!("{name:<10} objective {:.4}  {ids:?}", subset_objective(&pool, set, alpha)?);
        Ok(())
    };
    show("top-m", &select_diverse(&pool, m, n, 0.0, 0.0)?)?;
    show("greedy", &select_diverse(&pool, m, n, alpha, 0.5)?)?;
    if pool.members().len() <= 15 {
        show("exhaustive", &brute_force_select(&pool, m, alpha)?)?;
    }
    Ok(())
}
