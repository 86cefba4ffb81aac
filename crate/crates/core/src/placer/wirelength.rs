//! Exact and smoothed half-perimeter wirelength.

use super::{Gradient, PlacementState};
use crate::bookshelf::BenchmarkCase;

/// Weighted half-perimeter wirelength; pins sit at cell center plus offset.
pub fn hpwl(case: &BenchmarkCase, state: &PlacementState) -> f64 {
    let pins = case.pin_table();
    let mut total = 0.0;
    for net in 0..pins.weight.len() {
        let range = pins.net_start[net]..pins.net_start[net + 1];
        let (mut xlo, mut xhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in range {
            let c = pins.cell[p];
            let px = state.x[c] + pins.dx[p];
            let py = state.y[c] + pins.dy[p];
            xlo = xlo.min(px);
            xhi = xhi.max(px);
            ylo = ylo.min(py);
            yhi = yhi.max(py);
        }
        total += pins.weight[net] * ((xhi - xlo) + (yhi - ylo));
    }
    total
}

/// Log-sum-exp wirelength with temperature `gamma` and its exact gradient.
///
/// Per net and axis the value is `gamma * (ln Σ e^{p/gamma} + ln Σ e^{-p/gamma})`,
/// evaluated with a max-shift so it stays finite for any finite input. It
/// upper-bounds the net's HPWL and approaches it as `gamma -> 0`.
pub fn smooth_wl(case: &BenchmarkCase, state: &PlacementState, gamma: f64) -> Gradient {
    assert!(gamma > 0.0, "gamma must be positive");
    let n = case.num_cells();
    let pins = case.pin_table();
    let mut out = Gradient::zeros(n);
    let mut scratch = Vec::new();
    for net in 0..pins.weight.len() {
        let range = pins.net_start[net]..pins.net_start[net + 1];
        let w = pins.weight[net];
        scratch.clear();
        scratch.extend(range.clone().map(|p| state.x[pins.cell[p]] + pins.dx[p]));
        out.value += w * lse_axis(&scratch, gamma, |k, g| {
            out.gx[pins.cell[range.start + k]] += w * g;
        });
        scratch.clear();
        scratch.extend(range.clone().map(|p| state.y[pins.cell[p]] + pins.dy[p]));
        out.value += w * lse_axis(&scratch, gamma, |k, g| {
            out.gy[pins.cell[range.start + k]] += w * g;
        });
    }
    out
}

/// One axis of one net. Calls `emit(pin, d value / d pin)` for every pin.
fn lse_axis(pos: &[f64], gamma: f64, mut emit: impl FnMut(usize, f64)) -> f64 {
    let hi = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum_hi = 0.0;
    let mut sum_lo = 0.0;
    for &p in pos {
        sum_hi += ((p - hi) / gamma).exp();
        sum_lo += ((lo - p) / gamma).exp();
    }
    for (k, &p) in pos.iter().enumerate() {
        let g = ((p - hi) / gamma).exp() / sum_hi - ((lo - p) / gamma).exp() / sum_lo;
        emit(k, g);
    }
    (hi + gamma * sum_hi.ln()) + (-lo + gamma * sum_lo.ln())
}
