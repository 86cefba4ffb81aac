use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::DseError;

/// Squared-exponential kernel `sf2 * exp(-|a-b|^2 / (2 l^2))` plus
/// observation noise `sn2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            length_scale: 1.0,
            signal_var: 1.0,
            noise_var: 1e-4,
        }
    }
}

impl KernelParams {
    pub fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_var * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn validate(&self) -> Result<(), DseError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.length_scale) && ok(self.signal_var) && self.noise_var.is_finite() && self.noise_var >= 0.0 {
            Ok(())
        } else {
            Err(DseError::InvalidParams(format!("{self:?}")))
        }
    }
}

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Exact GP regression with a constant prior mean equal to the mean of the
/// training targets.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub params: KernelParams,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub prior_mean: f64,
    /// Jitter that made the covariance factorizable.
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Averages the targets of bitwise-identical inputs, keeping first-seen
/// order.
fn merge_duplicates(xs: &[Vec<f64>], ys: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut out_x: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (x, &y) in xs.iter().zip(ys) {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        match out_x
            .iter()
            .position(|o| o.iter().map(|v| v.to_bits()).eq(key.iter().copied()))
        {
            Some(i) => {
                sums[i].0 += y;
                sums[i].1 += 1;
            }
            None => {
                out_x.push(x.clone());
                sums.push((y, 1));
            }
        }
    }
    (out_x, sums.into_iter().map(|(s, n)| s / n as f64).collect())
}

/// Fits a GP to `(xs[i], ys[i])`. Jitter is added to the diagonal starting
/// at [`JITTER_START`] and grown tenfold until the Cholesky factorization
/// succeeds or [`JITTER_MAX`] is exceeded.
pub fn gp_fit(xs: &[Vec<f64>], ys: &[f64], params: KernelParams) -> Result<GpModel, DseError> {
    if xs.is_empty() {
        return Err(DseError::NoData);
    }
    if xs.len() != ys.len() {
        return Err(DseError::InvalidParams(format!("{} inputs, {} targets", xs.len(), ys.len())));
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return Err(DseError::DimensionMismatch);
    }
    if ys.iter().chain(xs.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(DseError::InvalidParams("non-finite training data".into()));
    }
    params.validate()?;
    let (inputs, targets) = merge_duplicates(xs, ys);
    let n = inputs.len();
    let prior_mean = targets.iter().sum::<f64>() / n as f64;
    let base = DMatrix::from_fn(n, n, |i, j| {
        params.k(&inputs[i], &inputs[j]) + if i == j { params.noise_var } else { 0.0 }
    });
    let resid = DVector::from_iterator(n, targets.iter().map(|y| y - prior_mean));
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            let alpha = chol.solve(&resid);
            return Ok(GpModel {
                params,
                inputs,
                targets,
                prior_mean,
                jitter,
                chol,
                alpha,
            });
        }
        jitter *= 10.0;
    }
    Err(DseError::SingularCovariance)
}

/// Posterior mean and standard deviation at `x`. The variance includes the
/// observation noise.
pub fn gp_predict(model: &GpModel, x: &[f64]) -> (f64, f64) {
    let n = model.inputs.len();
    let kx = DVector::from_iterator(n, model.inputs.iter().map(|xi| model.params.k(xi, x)));
    let mu = model.prior_mean + kx.dot(&model.alpha);
    let v = model.chol.l().solve_lower_triangular(&kx).expect("cholesky factor is invertible");
    let var = model.params.signal_var + model.params.noise_var - v.dot(&v);
    (mu, var.max(0.0).sqrt())
}

/// Expected improvement for minimization.
pub fn expected_improvement(mu: f64, sigma: f64, best_y: f64, xi: f64) -> f64 {
    let gain = best_y - mu - xi;
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let n = Normal::standard();
    (gain * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}
