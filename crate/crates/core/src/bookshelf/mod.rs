//! Placement problem instances and the Bookshelf benchmark format.
//!
//! A [`BenchmarkCase`] is immutable once built. Construction validates the
//! netlist and compiles a flat pin table that the wirelength kernels use
//! directly, so a case can be shared read-only across evaluator threads.
//!
//! Coordinates follow the Bookshelf convention: a cell position is its
//! lower-left corner and pin offsets are measured from the cell center.

mod parse;
mod synthetic;
mod write;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use thiserror::Error;

pub use parse::{parse_case, parse_case_with, ParseOptions};
pub use synthetic::{
    generate_synthetic, stacked_corner_placement, write_synthetic, SyntheticManifest, SyntheticSpec,
};
pub use write::{write_case, write_placement};

/// Movable cells whose area exceeds this multiple of the median movable area
/// are tagged [`CellKind::Macro`].
pub const DEFAULT_MACRO_AREA_FACTOR: f64 = 100.0;

#[derive(Debug, Error)]
pub enum BookshelfError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: syntax error near `{token}`")]
    Syntax {
        file: String,
        line: usize,
        token: String,
    },
    #[error("{file}:{line}: pin references undeclared cell `{cell}`")]
    DanglingPinReference {
        file: String,
        line: usize,
        cell: String,
    },
    #[error("netlist is empty")]
    EmptyNetlist,
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("cell `{cell}` has a non-finite coordinate")]
    NonFiniteCoordinate { cell: String },
    #[error("placement has {got} cells, case has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Movable,
    Fixed,
    Macro,
}

impl CellKind {
    pub fn is_fixed(self) -> bool {
        self == CellKind::Fixed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub kind: CellKind,
    /// Lower-left corner from the `.pl` file. Required for fixed cells,
    /// an optional hint for movable ones.
    pub pl: Option<(f64, f64)>,
}

impl Cell {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub cell: usize,
    /// Offset from the owning cell's center.
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub name: String,
    pub pins: Vec<Pin>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayoutRegion {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl LayoutRegion {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, BookshelfError> {
        let all_finite = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite());
        if !all_finite || xmax <= xmin || ymax <= ymin {
            return Err(BookshelfError::InvalidCase(format!(
                "degenerate region ({xmin}, {ymin})-({xmax}, {ymax})"
            )));
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.xmin + 0.5 * self.width(),
            self.ymin + 0.5 * self.height(),
        )
    }

    /// Larger of the two region dimensions.
    pub fn span(&self) -> f64 {
        self.width().max(self.height())
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Flattened pin arrays in net order. `pin_dx`/`pin_dy` are offsets from the
/// cell's lower-left corner, so a pin sits at `x[cell] + pin_dx`.
#[derive(Debug, Clone, Default)]
pub(crate) struct PinTable {
    pub net_start: Vec<usize>,
    pub cell: Vec<usize>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub weight: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkCase {
    name: String,
    cells: Vec<Cell>,
    nets: Vec<Net>,
    region: LayoutRegion,
    source_paths: BTreeMap<String, PathBuf>,
    pins: PinTable,
    movable: Vec<usize>,
}

impl BenchmarkCase {
    /// Validates the instance and compiles the pin table.
    pub fn new(
        name: impl Into<String>,
        cells: Vec<Cell>,
        nets: Vec<Net>,
        region: LayoutRegion,
    ) -> Result<Self, BookshelfError> {
        if cells.is_empty() || nets.is_empty() {
            return Err(BookshelfError::EmptyNetlist);
        }
        let mut seen = HashMap::with_capacity(cells.len());
        for (i, c) in cells.iter().enumerate() {
            if seen.insert(c.name.as_str(), i).is_some() {
                return Err(BookshelfError::InvalidCase(format!(
                    "duplicate cell name `{}`",
                    c.name
                )));
            }
            if !(c.width > 0.0 && c.height > 0.0) || !c.width.is_finite() || !c.height.is_finite() {
                return Err(BookshelfError::InvalidCase(format!(
                    "cell `{}` has non-positive size {}x{}",
                    c.name, c.width, c.height
                )));
            }
            if let Some((x, y)) = c.pl {
                if !x.is_finite() || !y.is_finite() {
                    return Err(BookshelfError::NonFiniteCoordinate {
                        cell: c.name.clone(),
                    });
                }
            } else if c.kind.is_fixed() {
                return Err(BookshelfError::InvalidCase(format!(
                    "fixed cell `{}` has no placement",
                    c.name
                )));
            }
        }
        let movable: Vec<usize> = (0..cells.len())
            .filter(|&i| !cells[i].kind.is_fixed())
            .collect();
        if movable.is_empty() {
            return Err(BookshelfError::InvalidCase("no movable cells".into()));
        }

        let mut pins = PinTable::default();
        pins.net_start.push(0);
        for net in &nets {
            if net.pins.is_empty() {
                return Err(BookshelfError::InvalidCase(format!(
                    "net `{}` has no pins",
                    net.name
                )));
            }
            if !(net.weight >= 0.0) || !net.weight.is_finite() {
                return Err(BookshelfError::InvalidCase(format!(
                    "net `{}` has invalid weight {}",
                    net.name, net.weight
                )));
            }
            for p in &net.pins {
                let Some(c) = cells.get(p.cell) else {
                    return Err(BookshelfError::InvalidCase(format!(
                        "net `{}` references cell index {}",
                        net.name, p.cell
                    )));
                };
                let tol = 1e-9 * c.width.max(c.height).max(1.0);
                if p.dx.abs() > 0.5 * c.width + tol || p.dy.abs() > 0.5 * c.height + tol {
                    return Err(BookshelfError::InvalidCase(format!(
                        "pin of net `{}` at offset ({}, {}) lies outside cell `{}`",
                        net.name, p.dx, p.dy, c.name
                    )));
                }
                pins.cell.push(p.cell);
                pins.dx.push(0.5 * c.width + p.dx);
                pins.dy.push(0.5 * c.height + p.dy);
            }
            pins.weight.push(net.weight);
            pins.net_start.push(pins.cell.len());
        }

        Ok(Self {
            name: name.into(),
            cells,
            nets,
            region,
            source_paths: BTreeMap::new(),
            pins,
            movable,
        })
    }

    pub(crate) fn with_source_paths(mut self, paths: BTreeMap<String, PathBuf>) -> Self {
        self.source_paths = paths;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn region(&self) -> &LayoutRegion {
        &self.region
    }

    pub fn source_paths(&self) -> &BTreeMap<String, PathBuf> {
        &self.source_paths
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_pins(&self) -> usize {
        self.pins.cell.len()
    }

    /// Indices of non-fixed cells, ascending.
    pub fn movable(&self) -> &[usize] {
        &self.movable
    }

    pub fn movable_area(&self) -> f64 {
        self.movable.iter().map(|&i| self.cells[i].area()).sum()
    }

    pub(crate) fn pin_table(&self) -> &PinTable {
        &self.pins
    }

    pub fn cell_index(&self, name: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.name == name)
    }

    /// Returns a copy where every fixed cell becomes movable (macro-tagged if
    /// large), keeping its `.pl` position as a hint.
    pub fn unfix_terminals(&self, macro_area_factor: f64) -> Result<Self, BookshelfError> {
        let mut cells = self.cells.clone();
        for c in &mut cells {
            if c.kind.is_fixed() {
                c.kind = CellKind::Movable;
            }
        }
        tag_macros(&mut cells, macro_area_factor);
        Ok(
            Self::new(self.name.clone(), cells, self.nets.clone(), self.region)?
                .with_source_paths(self.source_paths.clone()),
        )
    }
}

/// Tags large movable cells as macros, relative to the median movable area.
pub(crate) fn tag_macros(cells: &mut [Cell], factor: f64) {
    let mut areas: Vec<f64> = cells
        .iter()
        .filter(|c| !c.kind.is_fixed())
        .map(Cell::area)
        .collect();
    if areas.is_empty() {
        return;
    }
    areas.sort_by(f64::total_cmp);
    let median = crate::util::median_sorted(&areas);
    for c in cells.iter_mut().filter(|c| !c.kind.is_fixed()) {
        c.kind = if c.area() > factor * median {
            CellKind::Macro
        } else {
            CellKind::Movable
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(name: &str) -> Cell {
        Cell {
            name: name.into(),
            width: 1.0,
            height: 1.0,
            kind: CellKind::Movable,
            pl: None,
        }
    }

    #[test]
    fn rejects_duplicate_names() {
        let nets = vec![Net {
            name: "n".into(),
            pins: vec![Pin {
                cell: 0,
                dx: 0.0,
                dy: 0.0,
            }],
            weight: 1.0,
        }];
        let region = LayoutRegion::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let err = BenchmarkCase::new("d", vec![cell("a"), cell("a")], nets, region).unwrap_err();
        assert!(matches!(err, BookshelfError::InvalidCase(_)));
    }

    #[test]
    fn rejects_pin_outside_cell() {
        let nets = vec![Net {
            name: "n".into(),
            pins: vec![Pin {
                cell: 0,
                dx: 0.75,
                dy: 0.0,
            }],
            weight: 1.0,
        }];
        let region = LayoutRegion::new(0.0, 0.0, 4.0, 4.0).unwrap();
        assert!(BenchmarkCase::new("d", vec![cell("a")], nets, region).is_err());
    }

    #[test]
    fn pin_table_offsets_are_from_lower_left() {
        let mut a = cell("a");
        a.width = 2.0;
        let nets = vec![Net {
            name: "n".into(),
            pins: vec![Pin {
                cell: 0,
                dx: -0.5,
                dy: 0.25,
            }],
            weight: 1.0,
        }];
        let region = LayoutRegion::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let case = BenchmarkCase::new("d", vec![a], nets, region).unwrap();
        assert_eq!(case.pin_table().dx, vec![0.5]);
        assert_eq!(case.pin_table().dy, vec![0.75]);
    }

    #[test]
    fn macro_tagging_uses_median_area() {
        let mut cells: Vec<Cell> = (0..5).map(|i| cell(&format!("c{i}"))).collect();
        cells[4].width = 20.0;
        cells[4].height = 10.0;
        tag_macros(&mut cells, DEFAULT_MACRO_AREA_FACTOR);
        assert_eq!(cells[4].kind, CellKind::Macro);
        assert!(cells[..4].iter().all(|c| c.kind == CellKind::Movable));
    }
}
