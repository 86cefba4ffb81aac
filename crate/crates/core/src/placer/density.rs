//! Bin-based density model: quadratic penalty on per-bin overflow.

use super::{Gradient, PlacementState};
use crate::bookshelf::BenchmarkCase;

/// Uniform bin grid over the layout region, plus a ring of zero-capacity
/// bins just outside it.
///
/// Fixed cells count towards occupancy. A bin's effective capacity is the
/// larger of `bin_capacity` and the fixed area inside it, so fixed blockages
/// never create overflow that movable cells cannot remove. Area landing in
/// the outer ring is all overflow; it pushes cells off the region edge before
/// they get pinned there by projection.
#[derive(Debug, Clone)]
pub struct BinGrid {
    pub nx: usize,
    pub ny: usize,
    pub bin_capacity: f64,
    /// In-region occupancy, row-major `iy * nx + ix`.
    pub occupancy: Vec<f64>,
    xmin: f64,
    ymin: f64,
    bin_w: f64,
    bin_h: f64,
    /// Width of the box each footprint is smoothed with, per axis.
    smooth_w: f64,
    smooth_h: f64,
    /// Ring-padded arrays, `(ny + 2) x (nx + 2)`.
    occ: Vec<f64>,
    capacity: Vec<f64>,
}

impl BinGrid {
    /// `max(8, ceil(sqrt(movable count)))` bins per axis.
    pub fn for_case(case: &BenchmarkCase, target_density: f64) -> Self {
        let n = ((case.movable().len() as f64).sqrt().ceil() as usize).max(8);
        Self::new(case, n, n, target_density)
    }

    pub fn new(case: &BenchmarkCase, nx: usize, ny: usize, target_density: f64) -> Self {
        assert!(nx > 0 && ny > 0, "bin grid needs at least one bin");
        let r = case.region();
        let bin_w = r.width() / nx as f64;
        let bin_h = r.height() / ny as f64;
        let bin_capacity = target_density * bin_w * bin_h;
        let ext = (nx + 2) * (ny + 2);
        let mut grid = Self {
            nx,
            ny,
            bin_capacity,
            occupancy: vec![0.0; nx * ny],
            xmin: r.xmin,
            ymin: r.ymin,
            bin_w,
            bin_h,
            smooth_w: bin_w,
            smooth_h: bin_h,
            occ: vec![0.0; ext],
            capacity: vec![0.0; ext],
        };
        grid.set_fixed_capacity(case);
        grid
    }

    /// Switches to plain box rasterization: a cell's mass is exactly its
    /// overlap area with each bin.
    pub fn without_smoothing(mut self, case: &BenchmarkCase) -> Self {
        self.smooth_w = 0.0;
        self.smooth_h = 0.0;
        self.set_fixed_capacity(case);
        self
    }

    fn set_fixed_capacity(&mut self, case: &BenchmarkCase) {
        let mut fixed = vec![0.0; self.occ.len()];
        for c in case.cells() {
            if let (true, Some((x, y))) = (c.kind.is_fixed(), c.pl) {
                self.for_each_overlap(x, y, c.width, c.height, |b, _, _, ox, oy| {
                    fixed[b] += ox * oy;
                });
            }
        }
        let (nx, ny, bin_capacity) = (self.nx, self.ny, self.bin_capacity);
        for iy in 0..ny {
            for ix in 0..nx {
                let b = self.ext_index(ix, iy);
                self.capacity[b] = bin_capacity.max(fixed[b]);
            }
        }
    }

    fn ext_index(&self, ix: usize, iy: usize) -> usize {
        (iy + 1) * (self.nx + 2) + ix + 1
    }

    /// Effective capacity of in-region bin `b` (index `iy * nx + ix`).
    pub fn capacity(&self, b: usize) -> f64 {
        self.capacity[self.ext_index(b % self.nx, b / self.nx)]
    }

    /// Bin extent along x and y.
    pub fn bin_size(&self) -> (f64, f64) {
        (self.bin_w, self.bin_h)
    }

    /// Rasterizes every cell by overlap area of its (smoothed) footprint.
    pub fn update(&mut self, case: &BenchmarkCase, state: &PlacementState) {
        let mut occ = std::mem::take(&mut self.occ);
        occ.iter_mut().for_each(|o| *o = 0.0);
        for (i, c) in case.cells().iter().enumerate() {
            self.for_each_overlap(state.x[i], state.y[i], c.width, c.height, |b, _, _, ox, oy| {
                occ[b] += ox * oy;
            });
        }
        self.occ = occ;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                self.occupancy[iy * self.nx + ix] = self.occ[self.ext_index(ix, iy)];
            }
        }
    }

    fn axis_range(lo: f64, size: f64, origin: f64, bin: f64, n: usize) -> (usize, usize) {
        let a = ((lo - origin) / bin).floor();
        let b = ((lo + size - origin) / bin).ceil();
        let a = a.clamp(0.0, n as f64) as usize;
        let b = b.clamp(0.0, n as f64) as usize;
        (a, b)
    }

    /// Calls `f(bin, d ox/d x, d oy/d y, ox, oy)` for every ring-padded bin
    /// the smoothed footprint of the `w` x `h` cell with lower-left `(x, y)`
    /// reaches. Area beyond the ring is dropped.
    fn for_each_overlap(
        &self,
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        mut f: impl FnMut(usize, f64, f64, f64, f64),
    ) {
        let (ex, ey) = (self.nx + 2, self.ny + 2);
        let ox0 = self.xmin - self.bin_w;
        let oy0 = self.ymin - self.bin_h;
        let (sw, sh) = (self.smooth_w, self.smooth_h);
        let (ix0, ix1) = Self::axis_range(x - 0.5 * sw, w + sw, ox0, self.bin_w, ex);
        let (iy0, iy1) = Self::axis_range(y - 0.5 * sh, h + sh, oy0, self.bin_h, ey);
        for iy in iy0..iy1 {
            let b0 = oy0 + iy as f64 * self.bin_h;
            let Some((oy, doy)) = overlap(y - b0, h, self.bin_h, sh) else {
                continue;
            };
            for ix in ix0..ix1 {
                let a0 = ox0 + ix as f64 * self.bin_w;
                let Some((ox, dox)) = overlap(x - a0, w, self.bin_w, sw) else {
                    continue;
                };
                f(iy * ex + ix, dox, doy, ox, oy);
            }
        }
    }

    /// Penalty of one padded bin and its derivative w.r.t. occupancy.
    /// Ring bins have no capacity and are normalized by the nominal one.
    fn bin_penalty(&self, b: usize) -> (f64, f64) {
        let (o, c) = (self.occ[b], self.capacity[b]);
        if c > 0.0 {
            let excess = (o - c).max(0.0);
            (excess * excess / c, 2.0 * excess / c)
        } else {
            (o * o / self.bin_capacity, 2.0 * o / self.bin_capacity)
        }
    }

    /// `Σ max(0, occupancy - capacity)` over bins, counting everything in the
    /// outer ring; call after [`BinGrid::update`].
    pub fn overflow_area(&self) -> f64 {
        self.occ
            .iter()
            .zip(&self.capacity)
            .map(|(o, c)| (o - c).max(0.0))
            .sum()
    }
}

/// Mass of the interval `[lo, lo + size]`, smoothed by a box of width `s`,
/// that falls in the bin `[0, len]`, and its derivative w.r.t. `lo`; `None`
/// when there is none. Coordinates are relative to the bin's low edge.
///
/// Smoothing turns the box-box overlap into a piecewise quadratic with a
/// continuous, piecewise-linear derivative, so two cells a hair apart feel
/// different forces. With `s = 0` it is the plain overlap length.
fn overlap(lo: f64, size: f64, len: f64, s: f64) -> Option<(f64, f64)> {
    let hi = lo + size;
    if s <= 0.0 {
        let o = hi.min(len) - lo.max(0.0);
        if o <= 0.0 {
            return None;
        }
        let d = f64::from(u8::from(hi < len)) - f64::from(u8::from(lo > 0.0));
        return Some((o, d));
    }
    let r = 0.5 * s;
    if hi + r <= 0.0 || lo - r >= len {
        return None;
    }
    // Antiderivative of t -> clamp(t, 0, len).
    let k = |t: f64| {
        if t <= 0.0 {
            0.0
        } else if t <= len {
            0.5 * t * t
        } else {
            len * (t - 0.5 * len)
        }
    };
    let c = |t: f64| t.clamp(0.0, len);
    let o = (k(hi + r) - k(hi - r) - k(lo + r) + k(lo - r)) / s;
    let d = (c(hi + r) - c(hi - r) - c(lo + r) + c(lo - r)) / s;
    (o > 0.0).then_some((o, d))
}

/// `Σ_bins max(0, occ - cap)^2 / cap` and its gradient w.r.t. movable cell
/// positions. Fixed cells get a zero gradient. Updates `grid` occupancy.
pub fn density_penalty(
    case: &BenchmarkCase,
    state: &PlacementState,
    grid: &mut BinGrid,
) -> Gradient {
    grid.update(case, state);
    let n = case.num_cells();
    let mut out = Gradient::zeros(n);
    let mut coef = vec![0.0; grid.occ.len()];
    for (b, cb) in coef.iter_mut().enumerate() {
        let (v, d) = grid.bin_penalty(b);
        out.value += v;
        *cb = d;
    }
    if out.value == 0.0 {
        return out;
    }
    for &i in case.movable() {
        let c = &case.cells()[i];
        let (mut gx, mut gy) = (0.0, 0.0);
        grid.for_each_overlap(state.x[i], state.y[i], c.width, c.height, |b, dox, doy, ox, oy| {
            gx += coef[b] * dox * oy;
            gy += coef[b] * ox * doy;
        });
        out.gx[i] = gx;
        out.gy[i] = gy;
    }
    out
}

/// Overflowing area as a fraction of movable area, in `[0, 1]`.
pub fn overflow(case: &BenchmarkCase, state: &PlacementState, grid: &mut BinGrid) -> f64 {
    grid.update(case, state);
    overflow_of(case, grid)
}

pub(crate) fn overflow_of(case: &BenchmarkCase, grid: &BinGrid) -> f64 {
    let movable = case.movable_area();
    if movable <= 0.0 {
        return 0.0;
    }
    (grid.overflow_area() / movable).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bookshelf::{Cell, CellKind, LayoutRegion, Net, Pin};

    fn unit_cells(n: usize, side: f64) -> BenchmarkCase {
        let cells: Vec<Cell> = (0..n)
            .map(|i| Cell {
                name: format!("c{i}"),
                width: 1.0,
                height: 1.0,
                kind: CellKind::Movable,
                pl: None,
            })
            .collect();
        let nets = vec![Net {
            name: "n".into(),
            pins: (0..n)
                .map(|cell| Pin {
                    cell,
                    dx: 0.0,
                    dy: 0.0,
                })
                .collect(),
            weight: 1.0,
        }];
        BenchmarkCase::new(
            "d",
            cells,
            nets,
            LayoutRegion::new(0.0, 0.0, side, side).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn twice_capacity_in_one_bin_costs_capacity() {
        // 8x8 grid of 1x1 bins; two unit cells stacked in bin (0,0).
        let case = unit_cells(2, 8.0);
        let mut grid = BinGrid::for_case(&case, 1.0).without_smoothing(&case);
        let s = PlacementState::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        let d = density_penalty(&case, &s, &mut grid);
        assert_eq!(d.value, grid.bin_capacity);
        assert_eq!(overflow(&case, &s, &mut grid), 0.5);
    }

    #[test]
    fn spread_cells_have_zero_penalty_and_gradient() {
        let case = unit_cells(4, 8.0);
        let mut grid = BinGrid::for_case(&case, 1.0);
        let s = PlacementState::new(vec![0.5, 2.5, 4.5, 6.5], vec![1.5, 3.5, 5.5, 6.5]);
        let d = density_penalty(&case, &s, &mut grid);
        assert_eq!(d.value, 0.0);
        assert!(d.gx.iter().chain(&d.gy).all(|g| *g == 0.0));
        assert_eq!(overflow(&case, &s, &mut grid), 0.0);
    }

    #[test]
    fn occupancy_sums_to_area_inside_region() {
        let case = unit_cells(3, 8.0);
        let mut grid = BinGrid::for_case(&case, 1.0);
        let s = PlacementState::new(vec![0.6, 2.7, 6.4], vec![0.5, 6.1, 3.3]);
        grid.update(&case, &s);
        let total: f64 = grid.occupancy.iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn smoothed_overlap_masses_sum_to_length() {
        for (lo, size, s) in [(0.3, 1.0, 1.0), (-0.2, 2.5, 0.5), (1.7, 0.1, 1.25)] {
            let mut total = 0.0;
            for k in -3..6 {
                if let Some((o, _)) = overlap(lo - k as f64, size, 1.0, s) {
                    total += o;
                }
            }
            assert!((total - size).abs() < 1e-12, "{lo} {size} {s}: {total}");
        }
    }

    #[test]
    fn smoothed_overlap_derivative_matches_differences() {
        let h = 1e-6;
        for lo in [-1.3, -0.41, 0.2, 0.77, 1.05] {
            let f = |t: f64| overlap(t, 0.9, 1.0, 1.0).map_or(0.0, |p| p.0);
            let d = overlap(lo, 0.9, 1.0, 1.0).map_or(0.0, |p| p.1);
            let fd = (f(lo + h) - f(lo - h)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6, "{lo}: {d} vs {fd}");
        }
    }
}
