//! Budgeted Bayesian search over a fixed pool of candidate strategies.
//!
//! Each design point carries an algorithm embedding and a placement digest.
//! A GP with expected improvement picks the next point to evaluate; an
//! optional pretrained surrogate supplies the GP prior mean.

mod gp;
mod net;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gp::{expected_improvement, gp_fit, gp_predict, GpModel, KernelParams, JITTER_MAX, JITTER_START};
pub use net::{pretrain_surrogate, NetConfig, NetHeader, SurrogateNet, MIN_CORPUS};

use crate::util::{median, stream_rng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DseError {
    #[error("no training points")]
    NoData,
    #[error("covariance is singular even with maximum jitter")]
    SingularCovariance,
    #[error("feature dimensions differ")]
    DimensionMismatch,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("training loss is not finite after learning-rate retries")]
    NonFiniteLoss,
    #[error("corpus has {have} points, {need} needed")]
    CorpusTooSmall { have: usize, need: usize },
    #[error("bad surrogate file: {0}")]
    BadSurrogate(String),
    #[error("I/O error: {0}")]
    Io(String),
}

/// Loss assigned to a failed evaluation; the worst normalized value.
pub const FAILURE_LOSS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub id: String,
    pub embedding: Vec<f64>,
    /// Placement-feature digest, see `FeatureTable::digest`.
    pub digest: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

impl DesignPoint {
    /// `embedding ++ digest`.
    pub fn features(&self) -> Vec<f64> {
        self.embedding.iter().chain(&self.digest).copied().collect()
    }
}

/// HPWL mapped to `(0, 1)`: 0.5 at the baseline, lower is better.
pub fn normalized_loss(hpwl: f64, baseline: f64) -> f64 {
    hpwl / (hpwl + baseline)
}

/// Prior mean for the GP. Implemented by [`SurrogateNet`] and by plain
/// functions of a design point.
pub trait PriorMean {
    fn prior(&self, p: &DesignPoint) -> f64;
}

impl PriorMean for SurrogateNet {
    fn prior(&self, p: &DesignPoint) -> f64 {
        self.predict(p)
    }
}

impl<F: Fn(&DesignPoint) -> f64> PriorMean for F {
    fn prior(&self, p: &DesignPoint) -> f64 {
        self(p)
    }
}

/// How a surrogate enters the GP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// GP models `y - prior(x)` on raw features.
    #[default]
    Residual,
    /// GP models `y` on raw features; the surrogate is ignored.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DseConfig {
    /// Total evaluations, initial sample included.
    pub budget: usize,
    pub seed: u64,
    /// Initial random sample; `max(5, budget / 10)` when unset.
    pub init_samples: Option<usize>,
    /// Kernel; the median heuristic on the initial sample when unset.
    pub kernel: Option<KernelParams>,
    pub noise_var: f64,
    pub xi: f64,
    pub fusion: FusionMode,
}

impl Default for DseConfig {
    fn default() -> Self {
        Self {
            budget: 30,
            seed: 0,
            init_samples: None,
            kernel: None,
            noise_var: 1e-4,
            xi: 0.01,
            fusion: FusionMode::Residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DsePhase {
    Init,
    Acquire,
}

/// One evaluation, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseStep {
    pub step: usize,
    pub phase: DsePhase,
    /// Index into the pool.
    pub index: usize,
    pub id: String,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ei: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseOutcome {
    pub steps: Vec<DseStep>,
    pub kernel: KernelParams,
    /// Step with the lowest loss (first on ties).
    pub best: usize,
}

impl DseOutcome {
    pub fn best_step(&self) -> &DseStep {
        &self.steps[self.best]
    }

    /// Pool indices in evaluation order.
    pub fn order(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.index).collect()
    }
}

/// Kernel from the median heuristic: length scale is the median pairwise
/// distance, signal variance the target variance.
pub fn median_heuristic(xs: &[Vec<f64>], ys: &[f64], noise_var: f64) -> KernelParams {
    let mut d = Vec::new();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            d.push(xs[i].iter().zip(&xs[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    let l = median(&d);
    let n = ys.len().max(1) as f64;
    let m = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / n;
    KernelParams {
        length_scale: if l > 0.0 { l } else { 1.0 },
        signal_var: var.max(1e-8),
        noise_var,
    }
}

/// Runs the search. `evaluate` returns the normalized loss of a point, or
/// an error message; failures score [`FAILURE_LOSS`]. No point is evaluated
/// twice.
pub fn run_dse<F>(
    pool: &[DesignPoint],
    cfg: &DseConfig,
    prior: Option<&dyn PriorMean>,
    mut evaluate: F,
) -> Result<DseOutcome, DseError>
where
    F: FnMut(&DesignPoint) -> Result<f64, String>,
{
    if cfg.budget == 0 || cfg.budget > pool.len() {
        return Err(DseError::InvalidParams(format!(
            "budget {} for a pool of {}",
            cfg.budget,
            pool.len()
        )));
    }
    let feats: Vec<Vec<f64>> = pool.iter().map(DesignPoint::features).collect();
    if feats.iter().any(|f| f.len() != feats[0].len()) {
        return Err(DseError::DimensionMismatch);
    }
    let prior = match cfg.fusion {
        FusionMode::Residual => prior,
        FusionMode::Raw => None,
    };
    let mean = |i: usize| prior.map_or(0.0, |p| p.prior(&pool[i]));

    let mut steps: Vec<DseStep> = Vec::with_capacity(cfg.budget);
    let mut seen = vec![false; pool.len()];
    let mut run = |i: usize, phase: DsePhase, ei: Option<f64>, steps: &mut Vec<DseStep>, seen: &mut [bool]| {
        seen[i] = true;
        let (y, failure) = match evaluate(&pool[i]) {
            Ok(y) if y.is_finite() => (y, None),
            Ok(y) => (FAILURE_LOSS, Some(format!("non-finite loss {y}"))),
            Err(e) => (FAILURE_LOSS, Some(e)),
        };
        steps.push(DseStep {
            step: steps.len(),
            phase,
            index: i,
            id: pool[i].id.clone(),
            y,
            ei,
            failure,
        });
    };

    let n_init = cfg.init_samples.unwrap_or((cfg.budget / 10).max(5)).clamp(1, cfg.budget);
    let mut rng = stream_rng(cfg.seed, 0);
    for i in index::sample(&mut rng, pool.len(), n_init) {
        run(i, DsePhase::Init, None, &mut steps, &mut seen);
    }

    let targets = |steps: &[DseStep]| -> (Vec<Vec<f64>>, Vec<f64>) {
        steps
            .iter()
            .map(|s| (feats[s.index].clone(), s.y - mean(s.index)))
            .unzip()
    };
    let kernel = match cfg.kernel {
        Some(k) => k,
        None => {
            let (xs, rs) = targets(&steps);
            median_heuristic(&xs, &rs, cfg.noise_var)
        }
    };

    while steps.len() < cfg.budget {
        let (xs, rs) = targets(&steps);
        let model = gp_fit(&xs, &rs, kernel)?;
        let best_y = steps.iter().map(|s| s.y).fold(f64::INFINITY, f64::min);
        let mut pick: Option<(usize, f64)> = None;
        for i in (0..pool.len()).filter(|&i| !seen[i]) {
            let (mu, sigma) = gp_predict(&model, &feats[i]);
            let ei = expected_improvement(mu + mean(i), sigma, best_y, cfg.xi);
            if pick.is_none_or(|(_, b)| ei > b) {
                pick = Some((i, ei));
            }
        }
        let (i, ei) = pick.expect("budget is at most the pool size");
        run(i, DsePhase::Acquire, Some(ei), &mut steps, &mut seen);
    }

    let best = (0..steps.len())
        .min_by(|&a, &b| steps[a].y.total_cmp(&steps[b].y).then(a.cmp(&b)))
        .expect("at least one step");
    Ok(DseOutcome { steps, kernel, best })
}

/// Uniform random evaluation order of `budget` distinct pool indices, the
/// baseline DSE is compared against.
pub fn random_order(pool_len: usize, budget: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, 1);
    index::sample(&mut rng, pool_len, budget.min(pool_len)).into_vec()
}

/// 1-based number of evaluations until `order` first hits a member of
/// `targets`.
pub fn evaluations_to_hit(order: &[usize], targets: &[usize]) -> Option<usize> {
    order.iter().position(|i| targets.contains(i)).map(|p| p + 1)
}
