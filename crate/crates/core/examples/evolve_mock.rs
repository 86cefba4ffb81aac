//! Evolves one strategy component with the mock backend and writes a
//! resumable run directory.
//!
//!     cargo run --release --example evolve_mock -- [init|precond|policy] [trials] [out_dir]
//!
//! Running again with the same out_dir and more trials continues the run.

use std::path::PathBuf;

use evoplace::bookshelf::{generate_synthetic, SyntheticSpec};
use evoplace::dsl::{extract_features, StrategyBundle, StrategyKind};
use evoplace::evolve::{run_evolution, EvolutionConfig, EvolutionRun, EvolveEnv, PopulationMember};
use evoplace::harness::{evaluate_candidates, evaluate_isolated, generate_candidates, select_records, PlacementEvaluator};
use evoplace::llm::Gateway;
use evoplace::placer::EngineConfig;
use evoplace::prompt::{GenerationContext, TemplateSet};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: StrategyKind = args.next().as_deref().unwrap_or("init").parse().map_err(anyhow::Error::msg)?;
    let trials: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("evoplace-evolve"));
    let seed = 4;

    let case = generate_synthetic(&SyntheticSpec::two_cliques(), seed)?;
    let features = extract_features(&case).summary();
    let gateway = Gateway::mock(seed);
    let templates = TemplateSet::default();
    let evaluator = PlacementEvaluator::new(case, StrategyBundle::new(), EngineConfig::default(), seed);
    let baseline = evaluator.baseline().success_hpwl().expect("default placement succeeds");

    let cfg = EvolutionConfig {
        trials,
        seed,
        ..EvolutionConfig::default()
    };
    let ctx = GenerationContext::new(kind, features.clone());
    let cands = generate_candidates(&gateway, &templates, &ctx, 24, seed);
    let records = evaluate_candidates(&gateway, &evaluator, &cands, 4);
    let initial: Vec<PopulationMember> = select_records(&records, cfg.m, 16, 0.5, 0.5)?
        .into_iter()
        .filter_map(|r| r.source.clone())
        .map(|src| {
            let eval = evaluate_isolated(&evaluator, kind, &src);
            PopulationMember::new(kind, src, eval)
        })
        .collect();
    let run = EvolutionRun::new(kind, initial, cfg)?.with_baseline(baseline);
    println!("baseline hpwl {baseline:.4}, initial best {:.4}", run.best().hpwl());

    let env = EvolveEnv {
        gateway: &gateway,
        templates: &templates,
        evaluator: &evaluator,
        features: &features,
    };
    let outcome = run_evolution(&env, run, Some(&out))?;
    for t in outcome.history.iter().step_by((trials / 10).max(1)) {
        println!(
            "trial {:4}  parent {:>18} (q {:+.3}, n {})  best {:.4}",
            t.trial, t.parent_id, t.parent_ucb.q, t.parent_ucb.n, t.best_hpwl
        );
    }
    let best = outcome.best();
    println!(
        "best {} hpwl {:.4} ({:+.2}% vs baseline)\n{}",
        best.id,
        best.hpwl(),
        100.0 * (baseline - best.hpwl()) / baseline,
        best.source
    );
    println!("run directory {}", out.display());
    Ok(())
}
