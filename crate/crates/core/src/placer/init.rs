use rand::Rng;
use rand_distr::StandardNormal;

use super::PlacementState;
use crate::bookshelf::BenchmarkCase;
use crate::util::stream_rng;

/// `n` standard normal draws from stream `stream` of `seed`.
///
/// Streams 0 and 1 are the x and y noise of [`default_init`]; strategy
/// programs reach the same streams through `rand_n(k)`.
pub fn normal_vector(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `n` uniform draws in `[0, 1)`; `rand_u(k)` in strategy programs.
pub fn uniform_vector(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream | (1 << 32));
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Standard deviation of the default initial noise: 0.1% of the smaller
/// region dimension.
pub fn default_init_sigma(case: &BenchmarkCase) -> f64 {
    let r = case.region();
    0.001 * r.width().min(r.height())
}

/// Every movable cell centered on the region center plus seeded Gaussian
/// noise; fixed cells stay at their `.pl` coordinates.
pub fn default_init(case: &BenchmarkCase, seed: u64) -> PlacementState {
    let n = case.num_cells();
    let sigma = default_init_sigma(case);
    let (cx, cy) = case.region().center();
    let nx = normal_vector(seed, 0, n);
    let ny = normal_vector(seed, 1, n);
    let mut state = PlacementState::from_pl(case);
    for &i in case.movable() {
        state.set_center_clamped(case, i, cx + sigma * nx[i], cy + sigma * ny[i]);
    }
    state
}
