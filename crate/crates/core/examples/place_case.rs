//! Places a Bookshelf case with the default engine, then again with any
//! strategy files given, and writes the final `.pl`.
//!
//!     cargo run --example place_case -- [case.aux] [strategy.strat ...]
//!
//! Defaults to the hand-written toy case and the clustered macro initializer.

use std::path::PathBuf;

use evoplace::bookshelf::{parse_case, write_placement};
use evoplace::dsl::{parse_any_kind, StrategyBundle};
use evoplace::placer::{hpwl, default_init, run_global_place_traced, EngineConfig};

fn main() -> anyhow::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut args = std::env::args().skip(1);
    let aux = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("cases/toy/toy.aux"));
    let mut strats: Vec<PathBuf> = args.map(PathBuf::from).collect();
    if strats.is_empty() {
        strats.push(root.join("strategies/clustered_macro_init.strat"));
    }

    let case = parse_case(&aux)?;
    let cfg = EngineConfig::default();
    println!(
        "{}: {} cells, {} nets, start hpwl {:.3}",
        case.name(),
        case.num_cells(),
        case.nets().len(),
        hpwl(&case, &default_init(&case, 0))
    );

    let default = run_global_place_traced(&case, &StrategyBundle::new(), &cfg, 0);
    println!("default    {:?} hpwl {:.4} in {} iterations", default.result.status, default.result.hpwl.unwrap_or(f64::NAN), default.result.iterations);
    // The objective trace shows the density weight taking over.
    for (i, t) in default.objective.iter().enumerate().step_by(default.objective.len() / 5 + 1) {
        println!("  iter {i:4}  wl {:10.3}  density {:9.4}  lambda {:.3e}", t.smooth_wl, t.density, t.lambda_density);
    }

    let mut bundle = StrategyBundle::new();
    for path in &strats {
        let program = parse_any_kind(&std::fs::read_to_string(path)?)?;
        println!("using {} as {}", path.display(), program.kind());
        bundle = bundle.with(program);
    }
    let ours = run_global_place_traced(&case, &bundle, &cfg, 0);
    println!("strategies {:?} hpwl {:.4} in {} iterations", ours.result.status, ours.result.hpwl.unwrap_or(f64::NAN), ours.result.iterations);

    if let Some(state) = &ours.state {
        let out = std::env::temp_dir().join(format!("{}.pl", case.name()));
        write_placement(&case, state, &out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
