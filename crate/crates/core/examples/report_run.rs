//! Writes CSV and SVG summaries for a run directory.
//!
//!     cargo run --example report_run -- [run_dir] [baseline]
//!
//! Defaults to the directory `evolve_mock` writes.

use std::path::PathBuf;

use evoplace::harness::report::{report, ReportFormat};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("evoplace-evolve"));
    let baseline: Option<f64> = args.next().map(|s| s.parse()).transpose()?;
    for path in report(&dir, &[ReportFormat::Csv, ReportFormat::Svg], baseline)? {
        println!("wrote {}", path.display());
    }
    let curve = std::fs::read_to_string(dir.join("curve.csv")).unwrap_or_default();
    for line in curve.lines().take(5) {
        println!("  {line}");
    }
    Ok(())
}
