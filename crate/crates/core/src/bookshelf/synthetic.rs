//! Seeded synthetic netlists standing in for contest benchmarks at desk scale.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    tag_macros, BenchmarkCase, BookshelfError, Cell, CellKind, LayoutRegion, Net, Pin,
    DEFAULT_MACRO_AREA_FACTOR,
};
use crate::placer::PlacementState;
use crate::util::stream_rng;

/// Generator parameters. Read from TOML with a `topology` key selecting the
/// variant, e.g.
///
/// ```toml
/// topology = "cliques"
/// cliques = 2
/// clique_size = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSpec {
    /// Random hypergraph over variable-width cells with boundary pads.
    Random {
        cells: usize,
        nets: usize,
        #[serde(default = "default_max_degree")]
        max_degree: usize,
        #[serde(default = "default_pads")]
        pads: usize,
        #[serde(default)]
        macros: usize,
        #[serde(default = "default_utilization")]
        utilization: f64,
    },
    /// Clusters of cells joined by one net each, every cell also tied to its
    /// cluster's fixed pad at a distinct corner. Stacking every cluster on
    /// its pad gives a known good reference HPWL.
    Cliques {
        cliques: usize,
        clique_size: usize,
        #[serde(default = "one")]
        intra_weight: f64,
        #[serde(default = "one")]
        pad_weight: f64,
        #[serde(default)]
        inter_nets: usize,
        #[serde(default = "default_utilization")]
        utilization: f64,
    },
}

fn default_max_degree() -> usize {
    4
}
fn default_pads() -> usize {
    4
}
fn default_utilization() -> f64 {
    0.3
}
fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    /// Two 10-cell cliques with unit intra-clique weight.
    pub fn two_cliques() -> Self {
        SyntheticSpec::Cliques {
            cliques: 2,
            clique_size: 10,
            intra_weight: 1.0,
            pad_weight: 1.0,
            inter_nets: 0,
            utilization: default_utilization(),
        }
    }

    pub fn random(cells: usize) -> Self {
        SyntheticSpec::Random {
            cells,
            nets: cells + cells / 2,
            max_degree: default_max_degree(),
            pads: default_pads(),
            macros: 0,
            utilization: default_utilization(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, BookshelfError> {
        toml::from_str(text).map_err(|e| BookshelfError::InvalidSpec(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BookshelfError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BookshelfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<(), BookshelfError> {
        let bad = |m: &str| Err(BookshelfError::InvalidSpec(m.to_string()));
        match *self {
            SyntheticSpec::Random {
                cells,
                nets,
                max_degree,
                utilization,
                ..
            } => {
                if cells < 2 {
                    return bad("random topology needs at least 2 cells");
                }
                if nets == 0 {
                    return bad("random topology needs at least 1 net");
                }
                if max_degree < 2 {
                    return bad("max_degree must be at least 2");
                }
                if !(utilization > 0.0 && utilization <= 1.0) {
                    return bad("utilization must be in (0, 1]");
                }
            }
            SyntheticSpec::Cliques {
                cliques,
                clique_size,
                intra_weight,
                pad_weight,
                utilization,
                ..
            } => {
                if cliques == 0 || clique_size == 0 || cliques * clique_size < 2 {
                    return bad("cliques topology needs at least 2 cells");
                }
                if cliques > 4 {
                    return bad("at most 4 cliques (one per corner)");
                }
                if !(intra_weight >= 0.0 && pad_weight >= 0.0) {
                    return bad("weights must be non-negative");
                }
                if !(utilization > 0.0 && utilization <= 1.0) {
                    return bad("utilization must be in (0, 1]");
                }
            }
        }
        Ok(())
    }
}

/// Counts written next to a generated case so parsers can be checked against it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub name: String,
    pub seed: u64,
    pub cells: usize,
    pub movable: usize,
    pub fixed: usize,
    pub nets: usize,
    pub pins: usize,
}

impl SyntheticManifest {
    pub fn of(case: &BenchmarkCase, seed: u64) -> Self {
        Self {
            name: case.name().to_string(),
            seed,
            cells: case.num_cells(),
            movable: case.movable().len(),
            fixed: case.num_cells() - case.movable().len(),
            nets: case.nets().len(),
            pins: case.num_pins(),
        }
    }
}

/// Deterministic in `(spec, seed)`.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<BenchmarkCase, BookshelfError> {
    spec.validate()?;
    match *spec {
        SyntheticSpec::Random {
            cells,
            nets,
            max_degree,
            pads,
            macros,
            utilization,
        } => random_case(cells, nets, max_degree, pads, macros, utilization, seed),
        SyntheticSpec::Cliques {
            cliques,
            clique_size,
            intra_weight,
            pad_weight,
            inter_nets,
            utilization,
        } => clique_case(
            cliques,
            clique_size,
            intra_weight,
            pad_weight,
            inter_nets,
            utilization,
            seed,
        ),
    }
}

/// Generates a case and writes it plus `<base>.manifest.json` into `dir`.
pub fn write_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
    dir: impl AsRef<Path>,
    base: &str,
) -> Result<(PathBuf, SyntheticManifest), BookshelfError> {
    let dir = dir.as_ref();
    let case = generate_synthetic(spec, seed)?;
    let aux = super::write_case(&case, None, dir, base)?;
    let manifest = SyntheticManifest::of(&case, seed);
    let path = dir.join(format!("{base}.manifest.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|source| BookshelfError::Io { path, source })?;
    Ok((aux, manifest))
}

fn square_region(total_area: f64, utilization: f64) -> Result<LayoutRegion, BookshelfError> {
    let side = (total_area / utilization).sqrt().ceil().max(4.0);
    LayoutRegion::new(0.0, 0.0, side, side)
}

fn pin(cell: usize) -> Pin {
    Pin {
        cell,
        dx: 0.0,
        dy: 0.0,
    }
}

fn clique_case(
    cliques: usize,
    size: usize,
    intra_weight: f64,
    pad_weight: f64,
    inter_nets: usize,
    utilization: f64,
    seed: u64,
) -> Result<BenchmarkCase, BookshelfError> {
    let mut rng = stream_rng(seed, 0x636c_6971);
    let mut cells = Vec::new();
    for k in 0..cliques {
        for i in 0..size {
            // Quarter-unit widths keep every coordinate exactly representable.
            let width = 1.0 + 0.25 * f64::from(rng.random_range(0..4u8));
            cells.push(Cell {
                name: format!("c{k}_{i}"),
                width,
                height: 1.0,
                kind: CellKind::Movable,
                pl: None,
            });
        }
    }
    let movable_area: f64 = cells.iter().map(Cell::area).sum();
    let region = square_region(movable_area, utilization)?;
    let side = region.xmax;
    let corners = [
        (0.0, 0.0),
        (side - 1.0, side - 1.0),
        (0.0, side - 1.0),
        (side - 1.0, 0.0),
    ];
    let first_pad = cells.len();
    for (k, &corner) in corners.iter().enumerate().take(cliques) {
        cells.push(Cell {
            name: format!("pad{k}"),
            width: 1.0,
            height: 1.0,
            kind: CellKind::Fixed,
            pl: Some(corner),
        });
    }

    let mut nets = Vec::new();
    for k in 0..cliques {
        let base = k * size;
        nets.push(Net {
            name: format!("q{k}"),
            pins: (base..base + size).map(pin).collect(),
            weight: intra_weight,
        });
        for i in 0..size {
            nets.push(Net {
                name: format!("p{k}_{i}"),
                pins: vec![pin(base + i), pin(first_pad + k)],
                weight: pad_weight,
            });
        }
    }
    if cliques > 1 {
        for n in 0..inter_nets {
            let ka = rng.random_range(0..cliques);
            let mut kb = rng.random_range(0..cliques - 1);
            if kb >= ka {
                kb += 1;
            }
            let a = ka * size + rng.random_range(0..size);
            let b = kb * size + rng.random_range(0..size);
            nets.push(Net {
                name: format!("x{n}"),
                pins: vec![pin(a), pin(b)],
                weight: 1.0,
            });
        }
    }
    BenchmarkCase::new(
        format!("cliques{cliques}x{size}_s{seed}"),
        cells,
        nets,
        region,
    )
}

fn random_case(
    n_cells: usize,
    n_nets: usize,
    max_degree: usize,
    n_pads: usize,
    n_macros: usize,
    utilization: f64,
    seed: u64,
) -> Result<BenchmarkCase, BookshelfError> {
    let mut rng = stream_rng(seed, 0x7261_6e64);
    let mut cells = Vec::with_capacity(n_cells + n_pads);
    for i in 0..n_cells {
        let (width, height) = if i < n_macros {
            let side = f64::from(rng.random_range(16..24u8));
            (side, side)
        } else {
            (1.0 + 0.25 * f64::from(rng.random_range(0..8u8)), 1.0)
        };
        cells.push(Cell {
            name: format!("o{i}"),
            width,
            height,
            kind: CellKind::Movable,
            pl: None,
        });
    }
    let movable_area: f64 = cells.iter().map(Cell::area).sum();
    let region = square_region(movable_area, utilization)?;
    let side = region.xmax;
    for p in 0..n_pads {
        // Pads sit just inside the boundary, walking around the perimeter.
        let t = rng.random_range(0.0..1.0) * (side - 1.0);
        let pos = match p % 4 {
            0 => (t, 0.0),
            1 => (side - 1.0, t),
            2 => (t, side - 1.0),
            _ => (0.0, t),
        };
        cells.push(Cell {
            name: format!("p{p}"),
            width: 1.0,
            height: 1.0,
            kind: CellKind::Fixed,
            pl: Some(pos),
        });
    }
    tag_macros(&mut cells, DEFAULT_MACRO_AREA_FACTOR);

    let total = cells.len();
    let mut nets = Vec::with_capacity(n_nets);
    for n in 0..n_nets {
        let degree = rng.random_range(2..=max_degree.min(total));
        let mut members: Vec<usize> = Vec::with_capacity(degree);
        // Make sure every movable cell lands on at least one net.
        if n < n_cells {
            members.push(n);
        }
        while members.len() < degree {
            let c = rng.random_range(0..total);
            if !members.contains(&c) {
                members.push(c);
            }
        }
        let pins = members
            .into_iter()
            .map(|c| {
                let cell = &cells[c];
                let hw = 0.5 * cell.width;
                let hh = 0.5 * cell.height;
                Pin {
                    cell: c,
                    dx: (rng.random_range(-hw..=hw) * 8.0).round() / 8.0,
                    dy: (rng.random_range(-hh..=hh) * 8.0).round() / 8.0,
                }
            })
            .collect();
        nets.push(Net {
            name: format!("n{n}"),
            pins,
            weight: 1.0,
        });
    }
    BenchmarkCase::new(format!("random{n_cells}_s{seed}"), cells, nets, region)
}

/// Reference placement for a clique case: every clique cell stacked on its
/// pad, other cells at their `.pl` position or the region center.
pub fn stacked_corner_placement(case: &BenchmarkCase) -> PlacementState {
    let mut state = PlacementState::from_pl(case);
    for (i, c) in case.cells().iter().enumerate() {
        if c.kind.is_fixed() {
            continue;
        }
        let Some(k) = c
            .name
            .strip_prefix('c')
            .and_then(|rest| rest.split('_').next())
        else {
            continue;
        };
        if let Some(pad) = case.cell_index(&format!("pad{k}")) {
            let (px, py) = case.cells()[pad].pl.expect("pads are fixed");
            let r = case.region();
            state.x[i] = px.clamp(r.xmin, (r.xmax - c.width).max(r.xmin));
            state.y[i] = py.clamp(r.ymin, (r.ymax - c.height).max(r.ymin));
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::two_cliques();
        let a = generate_synthetic(&spec, 7).unwrap();
        let b = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert_eq!(a.nets(), b.nets());
        assert_eq!(a.region(), b.region());
    }

    #[test]
    fn zero_cells_is_invalid() {
        let spec = SyntheticSpec::Random {
            cells: 0,
            nets: 3,
            max_degree: 3,
            pads: 0,
            macros: 0,
            utilization: 0.5,
        };
        assert!(matches!(
            generate_synthetic(&spec, 0),
            Err(BookshelfError::InvalidSpec(_))
        ));
        let spec = SyntheticSpec::Cliques {
            cliques: 0,
            clique_size: 10,
            intra_weight: 1.0,
            pad_weight: 1.0,
            inter_nets: 0,
            utilization: 0.3,
        };
        assert!(generate_synthetic(&spec, 0).is_err());
    }

    #[test]
    fn clique_counts() {
        let case = generate_synthetic(&SyntheticSpec::two_cliques(), 1).unwrap();
        assert_eq!(case.num_cells(), 22);
        assert_eq!(case.movable().len(), 20);
        assert_eq!(case.nets().len(), 2 + 20);
    }

    #[test]
    fn toml_spec_parses() {
        let spec = SyntheticSpec::from_toml_str(
            "topology = \"random\"\ncells = 50\nnets = 70\nmacros = 2\n",
        )
        .unwrap();
        assert!(matches!(
            spec,
            SyntheticSpec::Random {
                cells: 50,
                macros: 2,
                ..
            }
        ));
        assert!(SyntheticSpec::from_toml_str("topology = \"torus\"\n").is_err());
    }

    #[test]
    fn random_macros_are_tagged() {
        let spec = SyntheticSpec::Random {
            cells: 60,
            nets: 90,
            max_degree: 4,
            pads: 4,
            macros: 2,
            utilization: 0.4,
        };
        let case = generate_synthetic(&spec, 3).unwrap();
        let macros = case
            .cells()
            .iter()
            .filter(|c| c.kind == CellKind::Macro)
            .count();
        assert_eq!(macros, 2);
    }
}
