use crate::bookshelf::BenchmarkCase;

/// Lower clamp for preconditioner entries.
pub const PRECOND_EPS: f64 = 1e-8;

/// Per-cell weighted net degree, each net counted once per cell.
pub(crate) fn net_weight_sums(case: &BenchmarkCase) -> Vec<f64> {
    let mut sums = vec![0.0; case.num_cells()];
    let mut seen = vec![usize::MAX; case.num_cells()];
    for (k, net) in case.nets().iter().enumerate() {
        for p in &net.pins {
            if seen[p.cell] != k {
                seen[p.cell] = k;
                sums[p.cell] += net.weight;
            }
        }
    }
    sums
}

/// `diag_i = Σ_{nets ∋ i} weight + lambda * area_i`, clamped below at
/// [`PRECOND_EPS`]. The engine divides the gradient by this diagonal.
pub fn default_precondition(case: &BenchmarkCase, lambda_density: f64) -> Vec<f64> {
    net_weight_sums(case)
        .into_iter()
        .zip(case.cells())
        .map(|(w, c)| (w + lambda_density * c.area()).max(PRECOND_EPS))
        .collect()
}
