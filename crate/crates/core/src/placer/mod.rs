//! Analytical global placement.
//!
//! The objective is `smooth_wl + lambda * density`, minimized by a
//! preconditioned Nesterov method with Barzilai-Borwein steps. Three hook
//! points (initial placement, preconditioner, optimizer policy) can be
//! replaced by strategy programs; see [`crate::dsl`].

mod density;
mod engine;
mod init;
mod optimizer;
mod precond;
mod state;
mod wirelength;

pub use density::{density_penalty, overflow, BinGrid};
pub use engine::{
    run_global_place, run_global_place_traced, EngineConfig, EvalResult, EvalStatus,
    ObjectiveTerms, PlaceOutcome,
};
pub use init::{default_init, default_init_sigma, normal_vector, uniform_vector};
pub use optimizer::{nesterov_bb_step, OptimizerState};
pub use precond::{default_precondition, PRECOND_EPS};
pub use state::PlacementState;
pub use wirelength::{hpwl, smooth_wl};

pub(crate) use precond::net_weight_sums;
pub(crate) use state::lower_left_bounds;

/// A scalar objective value with its gradient w.r.t. every cell position.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub value: f64,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl Gradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            gx: vec![0.0; n],
            gy: vec![0.0; n],
        }
    }

    /// Sum of absolute gradient entries over both axes.
    pub fn l1_norm(&self) -> f64 {
        self.gx.iter().chain(&self.gy).map(|g| g.abs()).sum()
    }
}
