//! The global placement loop and its configuration.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::density::overflow_of;
use super::{
    default_init, default_precondition, density_penalty, hpwl, lower_left_bounds, smooth_wl,
    BinGrid, OptimizerState, PlacementState,
};
use crate::bookshelf::BenchmarkCase;
use crate::dsl::{
    eval_init, eval_opt_policy, eval_precond, extract_features, GradStats, PolicyOutput, RunStats,
    StrategyBundle,
};
use crate::util::stream_rng;

/// Engine knobs. Lengths given as fractions are relative to the region span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub max_iters: usize,
    pub stop_overflow: f64,
    pub divergence_factor: f64,
    /// Iteration whose HPWL is the reference for the divergence check.
    pub divergence_ref_iter: usize,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub target_density: f64,
    pub warmup_iters: usize,
    pub lambda_growth: f64,
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub plateau_noise: f64,
    /// First step moves the largest preconditioned gradient entry this far.
    pub initial_step: f64,
    /// Cap on a single step's move of any coordinate.
    pub max_step: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            stop_overflow: 0.10,
            divergence_factor: 10.0,
            divergence_ref_iter: 10,
            gamma_start: 0.05,
            gamma_end: 0.005,
            target_density: 1.0,
            warmup_iters: 10,
            lambda_growth: 1.05,
            plateau_window: 20,
            plateau_tol: 1e-3,
            plateau_noise: 0.005,
            initial_step: 0.01,
            max_step: 0.02,
        }
    }
}

impl EngineConfig {
    /// Smoothing temperature for the current overflow: log-interpolated from
    /// `gamma_start * span` at overflow 1 down to `gamma_end * span` once
    /// overflow reaches `stop_overflow`.
    pub fn gamma(&self, span: f64, overflow: f64) -> f64 {
        let t = ((overflow - self.stop_overflow) / (1.0 - self.stop_overflow)).clamp(0.0, 1.0);
        span * self.gamma_end * (self.gamma_start / self.gamma_end).powf(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Success,
    Divergence,
    Error,
}

/// Outcome of one placement run.
///
/// `runtime_s` is wall-clock and therefore excluded from equality and from
/// serialization; everything else is a pure function of the run inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub status: EvalStatus,
    pub hpwl: Option<f64>,
    #[serde(skip_serializing, default)]
    pub runtime_s: f64,
    pub iterations: usize,
    pub overflow_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl PartialEq for EvalResult {
    fn eq(&self, other: &Self) -> bool {
        self.status == other.status
            && self.hpwl.map(f64::to_bits) == other.hpwl.map(f64::to_bits)
            && self.iterations == other.iterations
            && self.overflow_final.map(f64::to_bits) == other.overflow_final.map(f64::to_bits)
            && self.message == other.message
    }
}

impl EvalResult {
    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: EvalStatus::Error,
            hpwl: None,
            runtime_s: 0.0,
            iterations: 0,
            overflow_final: None,
            message: Some(message.into()),
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == EvalStatus::Success
    }

    /// HPWL of a successful run.
    pub fn success_hpwl(&self) -> Option<f64> {
        if self.is_success() {
            self.hpwl
        } else {
            None
        }
    }
}

/// Objective decomposition at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub smooth_wl: f64,
    pub density: f64,
    pub lambda_density: f64,
    pub gamma: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.smooth_wl + self.lambda_density * self.density
    }
}

/// A finished run: the result, the final placement and the objective trace.
#[derive(Debug, Clone)]
pub struct PlaceOutcome {
    pub result: EvalResult,
    pub state: Option<PlacementState>,
    pub objective: Vec<ObjectiveTerms>,
}

/// Runs global placement with any subset of strategy hooks filled in.
/// Strategy faults become an `Error` result; this never panics on bad
/// programs.
pub fn run_global_place(
    case: &BenchmarkCase,
    strategies: &StrategyBundle,
    config: &EngineConfig,
    seed: u64,
) -> EvalResult {
    run_global_place_traced(case, strategies, config, seed).result
}

/// [`run_global_place`] that also returns the final placement and trace.
pub fn run_global_place_traced(
    case: &BenchmarkCase,
    strategies: &StrategyBundle,
    config: &EngineConfig,
    seed: u64,
) -> PlaceOutcome {
    let start = Instant::now();
    let mut out = Engine::new(case, strategies, config, seed).run();
    out.result.runtime_s = start.elapsed().as_secs_f64();
    out
}

struct Engine<'a> {
    case: &'a BenchmarkCase,
    strategies: &'a StrategyBundle,
    cfg: &'a EngineConfig,
    seed: u64,
}

impl<'a> Engine<'a> {
    fn new(
        case: &'a BenchmarkCase,
        strategies: &'a StrategyBundle,
        cfg: &'a EngineConfig,
        seed: u64,
    ) -> Self {
        Self {
            case,
            strategies,
            cfg,
            seed,
        }
    }

    fn run(&self) -> PlaceOutcome {
        let case = self.case;
        let cfg = self.cfg;
        let features = extract_features(case);
        let mut state = match &self.strategies.init {
            Some(p) => match eval_init(p, case, &features, self.seed) {
                Ok(s) => s,
                Err(e) => return failed(EvalResult::error(e.to_string())),
            },
            None => default_init(case, self.seed),
        };
        if !state.is_finite() {
            return failed(EvalResult::error("NonFiniteInit"));
        }
        state.iteration = 0;
        state.overflow_history.clear();
        state.wl_history.clear();

        let n = case.num_cells();
        let span = case.region().span();
        let mut movable = vec![false; 2 * n];
        for &i in case.movable() {
            movable[i] = true;
            movable[n + i] = true;
        }
        let mut grid = BinGrid::for_case(case, cfg.target_density);
        let (lo, hi) = lower_left_bounds(case, 0.0, 0.0);
        let mut noise_rng = stream_rng(self.seed, 2);

        let mut opt: Option<OptimizerState> = None;
        let mut lambda = 0.0;
        let mut gamma_overflow = super::overflow(case, &state, &mut grid);
        let mut hpwl_ref: Option<f64> = None;
        let mut last_kick: Option<usize> = None;
        let mut trace = Vec::new();

        let mut it = 0;
        let status = loop {
            if let Some(o) = &opt {
                state.set_flat(&o.v);
            }
            state.iteration = it;
            let gamma = cfg.gamma(span, gamma_overflow);
            let wl = smooth_wl(case, &state, gamma);
            let dens = density_penalty(case, &state, &mut grid);
            let ovf = overflow_of(case, &grid);
            let h = hpwl(case, &state);

            if it >= cfg.warmup_iters {
                if lambda > 0.0 {
                    lambda *= cfg.lambda_growth;
                } else {
                    let dn = dens.l1_norm();
                    if dn > 0.0 {
                        lambda = wl.l1_norm() / dn;
                    }
                }
            }
            let terms = ObjectiveTerms {
                smooth_wl: wl.value,
                density: dens.value,
                lambda_density: lambda,
                gamma,
            };
            trace.push(terms);
            let prev_ovf = state.overflow_history.last().copied();
            let prev_h = state.wl_history.last().copied();
            state.wl_history.push(h);
            state.overflow_history.push(ovf);

            if !terms.total().is_finite() || !h.is_finite() {
                break EvalStatus::Divergence;
            }
            if it == cfg.divergence_ref_iter {
                hpwl_ref = Some(h);
            }
            if hpwl_ref.is_some_and(|r| h > cfg.divergence_factor * r) {
                break EvalStatus::Divergence;
            }
            if it >= cfg.warmup_iters && ovf <= cfg.stop_overflow {
                break EvalStatus::Success;
            }
            if it >= cfg.max_iters {
                break EvalStatus::Success;
            }

            let diag_cells = match &self.strategies.precond {
                Some(p) => {
                    let stats = GradStats {
                        lambda,
                        wl_grad_norm: wl.l1_norm(),
                        density_grad_norm: dens.l1_norm(),
                        iteration: it,
                        overflow: ovf,
                    };
                    match eval_precond(p, case, &features, &stats) {
                        Ok(d) => d,
                        Err(e) => return self.fault(e.to_string(), it, state, trace),
                    }
                }
                None => default_precondition(case, lambda),
            };
            let mut grad = Vec::with_capacity(2 * n);
            grad.extend(wl.gx.iter().zip(&dens.gx).map(|(a, b)| a + lambda * b));
            grad.extend(wl.gy.iter().zip(&dens.gy).map(|(a, b)| a + lambda * b));
            let mut diag = Vec::with_capacity(2 * n);
            diag.extend_from_slice(&diag_cells);
            diag.extend_from_slice(&diag_cells);

            let o = opt.get_or_insert_with(|| {
                let gmax = (0..2 * n)
                    .filter(|&k| movable[k])
                    .map(|k| (grad[k] / diag[k]).abs())
                    .fold(0.0, f64::max);
                let step = if gmax > 0.0 {
                    cfg.initial_step * span / gmax
                } else {
                    1.0
                };
                let mut o = OptimizerState::new(state.to_flat(), movable.clone(), step);
                o.max_displacement = cfg.max_step * span;
                o
            });

            let window = cfg.plateau_window;
            let plateau =
                it >= window && (ovf - state.overflow_history[it - window]).abs() < cfg.plateau_tol;
            let policy = match &self.strategies.opt_policy {
                Some(p) => {
                    let stats = RunStats {
                        iteration: it,
                        overflow: ovf,
                        overflow_delta: prev_ovf.map_or(0.0, |p| ovf - p),
                        wl_trend: prev_h.map_or(0.0, |p| if p > 0.0 { (h - p) / p } else { 0.0 }),
                        plateau,
                        lambda,
                        step: o.bb_step,
                    };
                    match eval_opt_policy(p, case, &features, &stats) {
                        Ok(pol) => pol,
                        Err(e) => return self.fault(e.to_string(), it, state, trace),
                    }
                }
                None => PolicyOutput::default(),
            };
            o.step_scale = policy.step_scale;
            o.momentum_scale = policy.momentum_scale;
            o.step(&grad, &diag);
            o.reflect(&lo, &hi);

            let cooled = last_kick.is_none_or(|k| it >= k + window);
            let plateau_sigma = if plateau && cooled && ovf > cfg.stop_overflow {
                cfg.plateau_noise * span
            } else {
                0.0
            };
            let sigma = plateau_sigma.max(policy.noise_level);
            o.noise_level = sigma;
            if sigma > 0.0 {
                for k in 0..2 * n {
                    if movable[k] {
                        let z: f64 = noise_rng.sample(StandardNormal);
                        o.u[k] += sigma * z;
                        o.v[k] += sigma * z;
                    }
                }
                o.reflect(&lo, &hi);
                if plateau_sigma > 0.0 {
                    last_kick = Some(it);
                }
            }
            gamma_overflow = ovf;
            it += 1;
        };

        for &i in case.movable() {
            let (cx, cy) = state.center(case, i);
            state.set_center_clamped(case, i, cx, cy);
        }
        let h = hpwl(case, &state);
        let ovf = super::overflow(case, &state, &mut grid);
        if let (Some(lh), Some(lo)) = (
            state.wl_history.last_mut(),
            state.overflow_history.last_mut(),
        ) {
            *lh = h;
            *lo = ovf;
        }
        let result = EvalResult {
            status,
            hpwl: h.is_finite().then_some(h),
            runtime_s: 0.0,
            iterations: it,
            overflow_final: ovf.is_finite().then_some(ovf),
            message: None,
        };
        PlaceOutcome {
            result,
            state: Some(state),
            objective: trace,
        }
    }

    fn fault(
        &self,
        message: String,
        it: usize,
        state: PlacementState,
        trace: Vec<ObjectiveTerms>,
    ) -> PlaceOutcome {
        let mut result = EvalResult::error(message);
        result.iterations = it;
        PlaceOutcome {
            result,
            state: Some(state),
            objective: trace,
        }
    }
}

fn failed(result: EvalResult) -> PlaceOutcome {
    PlaceOutcome {
        result,
        state: None,
        objective: Vec::new(),
    }
}
