//! Placement inputs exposed to strategy programs.

use std::sync::Arc;

use crate::bookshelf::{BenchmarkCase, CellKind};
use crate::placer::{default_init_sigma, net_weight_sums};
use crate::util::median;

/// Bumped whenever a feature is added; stored next to candidates.
pub const FEATURE_TABLE_VERSION: u32 = 1;

/// Per-cell vectors and global scalars derived from a case.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub version: u32,
    pub area: Arc<[f64]>,
    pub width: Arc<[f64]>,
    pub height: Arc<[f64]>,
    /// Number of distinct nets touching the cell.
    pub degree: Arc<[f64]>,
    pub pin_count: Arc<[f64]>,
    pub net_weight: Arc<[f64]>,
    pub is_macro: Arc<[f64]>,
    pub is_fixed: Arc<[f64]>,
    /// Centroid of fixed cells sharing a net; region center when none.
    pub fixed_nbr_x: Arc<[f64]>,
    pub fixed_nbr_y: Arc<[f64]>,
    /// `.pl` hint center; region center when absent.
    pub pl_x: Arc<[f64]>,
    pub pl_y: Arc<[f64]>,
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub region_w: f64,
    pub region_h: f64,
    pub span: f64,
    pub total_area: f64,
    pub utilization: f64,
    pub num_cells: f64,
    pub num_nets: f64,
    pub median_area: f64,
    pub init_sigma: f64,
}

/// Names of the per-cell vector features, in a fixed order.
pub const VECTOR_FEATURES: [&str; 12] = [
    "area",
    "width",
    "height",
    "degree",
    "pin_count",
    "net_weight",
    "is_macro",
    "is_fixed",
    "fixed_nbr_x",
    "fixed_nbr_y",
    "pl_x",
    "pl_y",
];

/// Names of the global scalar features, in a fixed order.
pub const SCALAR_FEATURES: [&str; 15] = [
    "xmin",
    "ymin",
    "xmax",
    "ymax",
    "center_x",
    "center_y",
    "region_w",
    "region_h",
    "span",
    "total_area",
    "utilization",
    "num_cells",
    "num_nets",
    "median_area",
    "init_sigma",
];

impl FeatureTable {
    pub fn vector(&self, name: &str) -> Option<&Arc<[f64]>> {
        Some(match name {
            "area" => &self.area,
            "width" => &self.width,
            "height" => &self.height,
            "degree" => &self.degree,
            "pin_count" => &self.pin_count,
            "net_weight" => &self.net_weight,
            "is_macro" => &self.is_macro,
            "is_fixed" => &self.is_fixed,
            "fixed_nbr_x" => &self.fixed_nbr_x,
            "fixed_nbr_y" => &self.fixed_nbr_y,
            "pl_x" => &self.pl_x,
            "pl_y" => &self.pl_y,
            _ => return None,
        })
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        Some(match name {
            "xmin" => self.xmin,
            "ymin" => self.ymin,
            "xmax" => self.xmax,
            "ymax" => self.ymax,
            "center_x" => self.center_x,
            "center_y" => self.center_y,
            "region_w" => self.region_w,
            "region_h" => self.region_h,
            "span" => self.span,
            "total_area" => self.total_area,
            "utilization" => self.utilization,
            "num_cells" => self.num_cells,
            "num_nets" => self.num_nets,
            "median_area" => self.median_area,
            "init_sigma" => self.init_sigma,
            _ => return None,
        })
    }

    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    /// Short human-readable digest for prompts.
    pub fn summary(&self) -> String {
        let macros = self.is_macro.iter().filter(|&&m| m > 0.0).count();
        let fixed = self.is_fixed.iter().filter(|&&m| m > 0.0).count();
        let mean_degree = self.degree.iter().sum::<f64>() / self.len() as f64;
        format!(
            "cells: {} ({} fixed, {} macros); nets: {}; region: [{}, {}] x [{}, {}]; \
             utilization: {:.3}; median cell area: {}; mean degree: {:.2}",
            self.num_cells,
            fixed,
            macros,
            self.num_nets,
            self.xmin,
            self.xmax,
            self.ymin,
            self.ymax,
            self.utilization,
            self.median_area,
            mean_degree
        )
    }

    /// Fixed-length numeric digest used as placement features in surrogates.
    pub fn digest(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        vec![
            self.num_cells.ln_1p(),
            self.num_nets.ln_1p(),
            self.utilization,
            mean(&self.degree),
            mean(&self.pin_count),
            mean(&self.net_weight),
            mean(&self.is_macro),
            mean(&self.is_fixed),
            (self.region_w / self.region_h).ln(),
            (self.median_area / (self.region_w * self.region_h))
                .max(1e-300)
                .ln()
                / 10.0,
        ]
    }
}

/// Computes every feature of `case` deterministically.
pub fn extract_features(case: &BenchmarkCase) -> FeatureTable {
    let n = case.num_cells();
    let cells = case.cells();
    let r = case.region();
    let (cx, cy) = r.center();

    let mut degree = vec![0.0; n];
    let mut pin_count = vec![0.0; n];
    let mut seen = vec![usize::MAX; n];
    let mut nbr_sum = vec![(0.0, 0.0, 0.0); n];
    for (k, net) in case.nets().iter().enumerate() {
        let fixed: Vec<(f64, f64)> = net
            .pins
            .iter()
            .filter(|p| cells[p.cell].kind.is_fixed())
            .filter_map(|p| {
                let c = &cells[p.cell];
                c.pl.map(|(x, y)| (x + 0.5 * c.width, y + 0.5 * c.height))
            })
            .collect();
        for p in &net.pins {
            pin_count[p.cell] += 1.0;
            if seen[p.cell] != k {
                seen[p.cell] = k;
                degree[p.cell] += 1.0;
                for &(fx, fy) in &fixed {
                    let s = &mut nbr_sum[p.cell];
                    s.0 += fx;
                    s.1 += fy;
                    s.2 += 1.0;
                }
            }
        }
    }
    let (fixed_nbr_x, fixed_nbr_y): (Vec<f64>, Vec<f64>) = nbr_sum
        .iter()
        .map(|&(sx, sy, k)| if k > 0.0 { (sx / k, sy / k) } else { (cx, cy) })
        .unzip();
    let (pl_x, pl_y): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .map(|c| match c.pl {
            Some((x, y)) => (x + 0.5 * c.width, y + 0.5 * c.height),
            None => (cx, cy),
        })
        .unzip();
    let flag = |f: &dyn Fn(CellKind) -> bool| -> Arc<[f64]> {
        cells
            .iter()
            .map(|c| if f(c.kind) { 1.0 } else { 0.0 })
            .collect()
    };
    let area: Vec<f64> = cells.iter().map(|c| c.area()).collect();
    let movable_areas: Vec<f64> = case.movable().iter().map(|&i| area[i]).collect();
    let total_area: f64 = area.iter().sum();

    FeatureTable {
        version: FEATURE_TABLE_VERSION,
        width: cells.iter().map(|c| c.width).collect(),
        height: cells.iter().map(|c| c.height).collect(),
        area: area.into(),
        degree: degree.into(),
        pin_count: pin_count.into(),
        net_weight: net_weight_sums(case).into(),
        is_macro: flag(&|k| k == CellKind::Macro),
        is_fixed: flag(&|k| k.is_fixed()),
        fixed_nbr_x: fixed_nbr_x.into(),
        fixed_nbr_y: fixed_nbr_y.into(),
        pl_x: pl_x.into(),
        pl_y: pl_y.into(),
        xmin: r.xmin,
        ymin: r.ymin,
        xmax: r.xmax,
        ymax: r.ymax,
        center_x: cx,
        center_y: cy,
        region_w: r.width(),
        region_h: r.height(),
        span: r.span(),
        total_area,
        utilization: case.movable_area() / r.area(),
        num_cells: n as f64,
        num_nets: case.nets().len() as f64,
        median_area: median(&movable_areas),
        init_sigma: default_init_sigma(case),
    }
}
