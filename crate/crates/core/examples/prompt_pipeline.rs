//! Runs the chained generation prompts against the mock backend and prints
//! every exchange.
//!
//!     cargo run --example prompt_pipeline -- [init|precond|policy] [seed]
//!
//! A remote backend (`[backend] mode = "remote"` in a config, key in
//! `EVOPLACE_API_KEY`) goes through the same calls.

use evoplace::bookshelf::{generate_synthetic, SyntheticSpec};
use evoplace::dsl::{extract_features, StrategyKind};
use evoplace::llm::Gateway;
use evoplace::prompt::{cot_generate, GenerationContext, TemplateSet};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: StrategyKind = args.next().as_deref().unwrap_or("init").parse().map_err(anyhow::Error::msg)?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);

    let case = generate_synthetic(&SyntheticSpec::two_cliques(), 0)?;
    let gateway = Gateway::mock(seed);
    let templates = TemplateSet::default();
    let ctx = GenerationContext::new(kind, extract_features(&case).summary());

    let cand = cot_generate(&gateway, &templates, &ctx, seed);
    for step in &cand.provenance {
        println!("--- {} ({}, request {})", step.step, step.template, step.request_hash);
        for line in step.response.lines().take(6) {
            println!("    {line}");
        }
    }
    match (&cand.source, &cand.failure) {
        (Some(src), None) => println!("\nfeasible {kind} candidate:\n{src}"),
        (_, Some(f)) => println!("\ninfeasible: {f:?}"),
        _ => println!("\nno source"),
    }
    Ok(())
}
