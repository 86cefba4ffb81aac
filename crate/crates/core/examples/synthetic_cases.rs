//! Writes seeded synthetic Bookshelf cases.
//!
//!     cargo run --example synthetic_cases -- [out_dir] [seed]
//!
//! Without arguments this regenerates the committed cases under `cases/`.

use std::path::PathBuf;

use evoplace::bookshelf::{parse_case, write_synthetic, SyntheticSpec};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases"));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let specs = [
        ("two_cliques", SyntheticSpec::two_cliques()),
        ("random60", SyntheticSpec::random(60)),
        (
            "macros120",
            SyntheticSpec::Random {
                cells: 120,
                nets: 180,
                max_degree: 5,
                pads: 8,
                macros: 4,
                utilization: 0.4,
            },
        ),
    ];
    for (name, spec) in specs {
        let (aux, m) = write_synthetic(&spec, seed, out.join(name), name)?;
        // Read it back so a broken writer shows up here rather than later.
        let case = parse_case(&aux)?;
        assert_eq!(case.num_cells(), m.cells);
        println!(
            "{}: {} cells ({} fixed), {} nets, {} pins",
            aux.display(),
            m.cells,
            m.fixed,
            m.nets,
            m.pins
        );
    }
    Ok(())
}
