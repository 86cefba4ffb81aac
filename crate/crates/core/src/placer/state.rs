use crate::bookshelf::BenchmarkCase;

/// Cell positions plus the per-iteration traces of a placement run.
///
/// `x[i]`, `y[i]` are the lower-left corner of cell `i` (Bookshelf
/// convention); [`PlacementState::center`] gives the center.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlacementState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iteration: usize,
    pub overflow_history: Vec<f64>,
    pub wl_history: Vec<f64>,
}

impl PlacementState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            x,
            y,
            ..Self::default()
        }
    }

    /// Positions from the case's `.pl` data; cells without one start centered.
    pub fn from_pl(case: &BenchmarkCase) -> Self {
        let (cx, cy) = case.region().center();
        let (x, y) = case
            .cells()
            .iter()
            .map(|c| c.pl.unwrap_or((cx - 0.5 * c.width, cy - 0.5 * c.height)))
            .unzip();
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn center(&self, case: &BenchmarkCase, i: usize) -> (f64, f64) {
        let c = &case.cells()[i];
        (self.x[i] + 0.5 * c.width, self.y[i] + 0.5 * c.height)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    /// Moves cell `i` so its center is at `(cx, cy)`, keeping the cell inside
    /// the region. A cell wider than the region is centered on that axis.
    pub fn set_center_clamped(&mut self, case: &BenchmarkCase, i: usize, cx: f64, cy: f64) {
        let (x, y) = clamped_lower_left(case, i, cx, cy);
        self.x[i] = x;
        self.y[i] = y;
    }

    /// Concatenated `[x.., y..]` vector, the optimizer's layout.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.x.len());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let n = self.x.len();
        self.x.copy_from_slice(&flat[..n]);
        self.y.copy_from_slice(&flat[n..]);
    }
}

pub(crate) fn clamp_axis(c: f64, lo: f64, hi: f64, size: f64) -> f64 {
    let (a, b) = (lo + 0.5 * size, hi - 0.5 * size);
    let center = if a <= b {
        c.clamp(a, b)
    } else {
        0.5 * (lo + hi)
    };
    center - 0.5 * size
}

pub(crate) fn clamped_lower_left(case: &BenchmarkCase, i: usize, cx: f64, cy: f64) -> (f64, f64) {
    let c = &case.cells()[i];
    let r = case.region();
    (
        clamp_axis(cx, r.xmin, r.xmax, c.width),
        clamp_axis(cy, r.ymin, r.ymax, c.height),
    )
}

/// Per-coordinate bounds keeping each cell inside the region grown by
/// `(mx, my)` on every side.
pub(crate) fn lower_left_bounds(case: &BenchmarkCase, mx: f64, my: f64) -> (Vec<f64>, Vec<f64>) {
    let n = case.num_cells();
    let r = case.region();
    let mut lo = vec![0.0; 2 * n];
    let mut hi = vec![0.0; 2 * n];
    for (i, c) in case.cells().iter().enumerate() {
        let (xl, xh) = axis_bounds(r.xmin - mx, r.xmax + mx, c.width);
        let (yl, yh) = axis_bounds(r.ymin - my, r.ymax + my, c.height);
        lo[i] = xl;
        hi[i] = xh;
        lo[n + i] = yl;
        hi[n + i] = yh;
    }
    (lo, hi)
}

fn axis_bounds(lo: f64, hi: f64, size: f64) -> (f64, f64) {
    if hi - lo >= size {
        (lo, hi - size)
    } else {
        let mid = 0.5 * (lo + hi) - 0.5 * size;
        (mid, mid)
    }
}
