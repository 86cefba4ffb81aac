//! Parses, checks and runs strategy programs, and shows what the checker
//! rejects.
//!
//!     cargo run --example strategy_dsl

use evoplace::bookshelf::{generate_synthetic, SyntheticSpec};
use evoplace::dsl::{eval_init, extract_features, parse_strategy, StrategyKind, MAX_COST_PER_CELL};
use evoplace::llm::{mock_generate, mock_mutate};
use evoplace::placer::hpwl;

const INIT: &str = "\
# Pull each cell toward its fixed neighbours, spread by area.
spread = init_sigma * (1 + clamp(utilization, 0, 1))
x_init = 0.7 * fixed_nbr_x + 0.3 * center_x + spread * rand_n(0) / sqrt(1 + area)
y_init = 0.7 * fixed_nbr_y + 0.3 * center_y + spread * rand_n(1) / sqrt(1 + area)
";

fn main() -> anyhow::Result<()> {
    let case = generate_synthetic(&SyntheticSpec::two_cliques(), 0)?;
    let features = extract_features(&case);
    println!("features: {}", features.summary());

    let program = parse_strategy(INIT, StrategyKind::Init)?;
    println!("cost per cell {} (limit {MAX_COST_PER_CELL})", program.cost_per_cell());
    let start = eval_init(&program, &case, &features, 1)?;
    println!("initial hpwl {:.3}", hpwl(&case, &start));

    for bad in [
        "x_init = center_x\n",
        "x_init = kmeans1d(area, 99)\ny_init = center_y\n",
        "x_init = center_x + unknown\ny_init = center_y\n",
        "diag_scale = 1\n",
    ] {
        match parse_strategy(bad, StrategyKind::Init) {
            Ok(_) => println!("accepted: {bad:?}"),
            Err(e) => println!("rejected: {}", e.to_string().lines().next().unwrap_or_default()),
        }
    }

    // The mock backend writes and edits programs without any network.
    let child_src = mock_generate(7, StrategyKind::Precond);
    println!("\nmock precond program:\n{child_src}");
    let mutated = mock_mutate(8, &child_src)?;
    println!("one mutation later:\n{mutated}");
    parse_strategy(&mutated, StrategyKind::Precond)?;
    Ok(())
}
