use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{BenchmarkCase, BookshelfError, CellKind};
use crate::placer::PlacementState;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BookshelfError + '_ {
    move |source| BookshelfError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_placement(case: &BenchmarkCase, p: &PlacementState) -> Result<(), BookshelfError> {
    let n = case.num_cells();
    if p.x.len() != n || p.y.len() != n {
        return Err(BookshelfError::DimensionMismatch {
            expected: n,
            got: p.x.len().min(p.y.len()),
        });
    }
    for (i, c) in case.cells().iter().enumerate() {
        if !p.x[i].is_finite() || !p.y[i].is_finite() {
            return Err(BookshelfError::NonFiniteCoordinate {
                cell: c.name.clone(),
            });
        }
    }
    Ok(())
}

fn pl_text(case: &BenchmarkCase, placement: Option<&PlacementState>) -> String {
    let mut out = String::from("UCLA pl 1.0\n\n");
    for (i, c) in case.cells().iter().enumerate() {
        let (x, y) = match placement {
            Some(p) => (p.x[i], p.y[i]),
            None => c.pl.unwrap_or_else(|| {
                let (cx, cy) = case.region().center();
                (cx - 0.5 * c.width, cy - 0.5 * c.height)
            }),
        };
        // `{}` on f64 prints the shortest text that parses back to the same bits.
        let _ = write!(out, "{}\t{}\t{}\t: N", c.name, x, y);
        if c.kind.is_fixed() {
            out.push_str(" /FIXED");
        }
        out.push('\n');
    }
    out
}

/// Writes a `.pl` file for `placement`. Fixed cells carry the `/FIXED` marker.
pub fn write_placement(
    case: &BenchmarkCase,
    placement: &PlacementState,
    path: impl AsRef<Path>,
) -> Result<(), BookshelfError> {
    let path = path.as_ref();
    check_placement(case, placement)?;
    std::fs::write(path, pl_text(case, Some(placement))).map_err(io_err(path))
}

/// Writes a complete Bookshelf case (`.aux`, `.nodes`, `.nets`, `.wts`, `.pl`,
/// `.scl`) named `base` into `dir` and returns the `.aux` path. When
/// `placement` is given it replaces the case's own `.pl` coordinates.
pub fn write_case(
    case: &BenchmarkCase,
    placement: Option<&PlacementState>,
    dir: impl AsRef<Path>,
    base: &str,
) -> Result<PathBuf, BookshelfError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    if let Some(p) = placement {
        check_placement(case, p)?;
    }

    let mut nodes = String::from("UCLA nodes 1.0\n\n");
    let terminals = case.cells().iter().filter(|c| c.kind.is_fixed()).count();
    let _ = writeln!(nodes, "NumNodes : {}", case.num_cells());
    let _ = writeln!(nodes, "NumTerminals : {terminals}");
    for c in case.cells() {
        let _ = write!(nodes, "\t{}\t{}\t{}", c.name, c.width, c.height);
        if c.kind == CellKind::Fixed {
            nodes.push_str("\tterminal");
        }
        nodes.push('\n');
    }

    let mut nets = String::from("UCLA nets 1.0\n\n");
    let _ = writeln!(nets, "NumNets : {}", case.nets().len());
    let _ = writeln!(nets, "NumPins : {}", case.num_pins());
    let mut wts = String::from("UCLA wts 1.0\n\n");
    for net in case.nets() {
        let _ = writeln!(nets, "NetDegree : {} {}", net.pins.len(), net.name);
        for p in &net.pins {
            let _ = writeln!(
                nets,
                "\t{} B : {} {}",
                case.cells()[p.cell].name,
                p.dx,
                p.dy
            );
        }
        let _ = writeln!(wts, "{} {}", net.name, net.weight);
    }

    let r = case.region();
    let mut scl = String::from("UCLA scl 1.0\n\nNumRows : 1\n\n");
    let _ = writeln!(scl, "CoreRow Horizontal");
    let _ = writeln!(scl, " Coordinate : {}", r.ymin);
    let _ = writeln!(scl, " Height : {}", r.height());
    let _ = writeln!(scl, " Sitewidth : {}", r.width());
    let _ = writeln!(scl, " Sitespacing : {}", r.width());
    let _ = writeln!(scl, " Siteorient : 1");
    let _ = writeln!(scl, " Sitesymmetry : 1");
    let _ = writeln!(scl, " SubrowOrigin : {} NumSites : 1", r.xmin);
    let _ = writeln!(scl, "End");

    let aux =
        format!("RowBasedPlacement : {base}.nodes {base}.nets {base}.wts {base}.pl {base}.scl\n");
    let files = [
        ("aux", aux),
        ("nodes", nodes),
        ("nets", nets),
        ("wts", wts),
        ("pl", pl_text(case, placement)),
        ("scl", scl),
    ];
    for (ext, text) in files {
        let path = dir.join(format!("{base}.{ext}"));
        std::fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(dir.join(format!("{base}.aux")))
}
