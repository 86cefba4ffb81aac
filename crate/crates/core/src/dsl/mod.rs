//! The strategy language.
//!
//! A strategy is a short straight-line program over per-cell vectors and
//! scalars. There are no loops, user functions or I/O; every builtin has a
//! static cost, so a program's worst-case work is known before it runs.
//!
//! ```
//! use evoplace::dsl::{parse_strategy, StrategyKind};
//!
//! let p = parse_strategy(
//!     "spread = 0.25 * region_w\nx_init = center_x + spread * (rand_u(0) - 0.5)\ny_init = center_y",
//!     StrategyKind::Init,
//! )
//! .unwrap();
//! assert_eq!(p.kind(), StrategyKind::Init);
//! ```

pub mod ast;
mod check;
mod features;
mod interp;
mod parser;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bookshelf::BenchmarkCase;
use crate::placer::{default_precondition, PlacementState, PRECOND_EPS};
use crate::util::short_hash;

pub use check::{Ty, BUILTINS, MAX_COST_PER_CELL, MAX_KMEANS_K};
pub use features::{
    extract_features, FeatureTable, FEATURE_TABLE_VERSION, SCALAR_FEATURES, VECTOR_FEATURES,
};
pub use interp::{kmeans1d, Value};
pub use parser::parse;

/// Upper clamp for preconditioner entries.
pub const PRECOND_MAX: f64 = 1e12;

/// Identity programs: each reproduces the engine default for its slot.
pub const IDENTITY_INIT: &str =
    "x_init = center_x + init_sigma * rand_n(0)\ny_init = center_y + init_sigma * rand_n(1)\n";
pub const IDENTITY_PRECOND: &str = "diag_scale = 1\n";
pub const IDENTITY_POLICY: &str = "step_scale = 1\nnoise_level = 0\nmomentum_scale = 1\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error("parse error at {line}:{col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("type error: {0}")]
    Type(String),
    #[error("missing output `{0}`")]
    MissingOutput(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("strategy runtime error: {0}")]
    Runtime(String),
    #[error("NonFiniteInit: `{0}` has non-finite entries")]
    NonFiniteInit(String),
    #[error("program of kind {got} cannot fill the {expected} slot")]
    KindMismatch {
        expected: StrategyKind,
        got: StrategyKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Init,
    Precond,
    OptPolicy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::Init,
        StrategyKind::Precond,
        StrategyKind::OptPolicy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Init => "init",
            StrategyKind::Precond => "precond",
            StrategyKind::OptPolicy => "opt_policy",
        }
    }

    /// Names the program must assign.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            StrategyKind::Init => &["x_init", "y_init"],
            StrategyKind::Precond => &["diag_scale"],
            StrategyKind::OptPolicy => &["step_scale", "noise_level", "momentum_scale"],
        }
    }

    pub fn output_types(self) -> &'static [Ty] {
        match self {
            StrategyKind::Init => &[Ty::Vector, Ty::Vector],
            StrategyKind::Precond => &[Ty::Vector],
            StrategyKind::OptPolicy => &[Ty::Scalar, Ty::Scalar, Ty::Scalar],
        }
    }

    /// Run-time scalars visible to this kind in addition to the features.
    pub fn extras(self) -> &'static [&'static str] {
        match self {
            StrategyKind::Init => &[],
            StrategyKind::Precond => &[
                "lambda",
                "wl_grad_norm",
                "density_grad_norm",
                "iteration",
                "overflow",
            ],
            StrategyKind::OptPolicy => &[
                "iteration",
                "overflow",
                "overflow_delta",
                "wl_trend",
                "plateau",
                "lambda",
                "step",
            ],
        }
    }

    pub fn identity_source(self) -> &'static str {
        match self {
            StrategyKind::Init => IDENTITY_INIT,
            StrategyKind::Precond => IDENTITY_PRECOND,
            StrategyKind::OptPolicy => IDENTITY_POLICY,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "init" => Ok(StrategyKind::Init),
            "precond" => Ok(StrategyKind::Precond),
            "optpolicy" | "policy" => Ok(StrategyKind::OptPolicy),
            _ => Err(format!(
                "unknown strategy kind `{s}` (init, precond, optpolicy)"
            )),
        }
    }
}

/// A validated strategy program.
#[derive(Debug, Clone)]
pub struct StrategyProgram {
    kind: StrategyKind,
    source: String,
    ast: ast::Ast,
    compiled: check::Compiled,
    id: String,
}

impl PartialEq for StrategyProgram {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.source == other.source
    }
}

impl StrategyProgram {
    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &ast::Ast {
        &self.ast
    }

    /// Short hash of the source text.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Static per-cell evaluation cost.
    pub fn cost_per_cell(&self) -> u64 {
        self.compiled.cost_per_cell
    }

    pub fn identity(kind: StrategyKind) -> Self {
        parse_strategy(kind.identity_source(), kind).expect("identity programs are valid")
    }

    fn run(
        &self,
        features: &FeatureTable,
        extras: &[f64],
        seed: u64,
    ) -> Result<Vec<Value>, StrategyError> {
        interp::run(
            &self.compiled,
            &interp::Env {
                features,
                extras,
                seed,
            },
        )
    }
}

/// Parses and validates `source` as a program of `kind`.
pub fn parse_strategy(source: &str, kind: StrategyKind) -> Result<StrategyProgram, StrategyError> {
    let ast = parser::parse(source)?;
    let compiled = check::check(&ast, kind)?;
    Ok(StrategyProgram {
        kind,
        source: source.to_string(),
        ast,
        compiled,
        id: short_hash(source),
    })
}

/// Guesses a program's kind from the outputs it assigns.
pub fn infer_kind(ast: &ast::Ast) -> Option<StrategyKind> {
    StrategyKind::ALL
        .into_iter()
        .find(|k| ast.stmts.iter().any(|s| s.name == k.outputs()[0]))
}

/// Parses a program whose kind follows from the outputs it assigns.
pub fn parse_any_kind(source: &str) -> Result<StrategyProgram, StrategyError> {
    let ast = parser::parse(source)?;
    let kind = infer_kind(&ast).ok_or_else(|| {
        StrategyError::MissingOutput("x_init, diag_scale or step_scale".into())
    })?;
    parse_strategy(source, kind)
}

/// Programs for any subset of the three hook points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyBundle {
    pub init: Option<StrategyProgram>,
    pub precond: Option<StrategyProgram>,
    pub opt_policy: Option<StrategyProgram>,
}

impl StrategyBundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places `p` in the slot matching its kind, replacing any previous one.
    pub fn set(&mut self, p: StrategyProgram) {
        match p.kind {
            StrategyKind::Init => self.init = Some(p),
            StrategyKind::Precond => self.precond = Some(p),
            StrategyKind::OptPolicy => self.opt_policy = Some(p),
        }
    }

    pub fn with(mut self, p: StrategyProgram) -> Self {
        self.set(p);
        self
    }

    pub fn get(&self, kind: StrategyKind) -> Option<&StrategyProgram> {
        match kind {
            StrategyKind::Init => self.init.as_ref(),
            StrategyKind::Precond => self.precond.as_ref(),
            StrategyKind::OptPolicy => self.opt_policy.as_ref(),
        }
    }

    /// Checks that each present program sits in the slot of its kind.
    pub fn validate(&self) -> Result<(), StrategyError> {
        for kind in StrategyKind::ALL {
            if let Some(p) = self.get(kind) {
                if p.kind != kind {
                    return Err(StrategyError::KindMismatch {
                        expected: kind,
                        got: p.kind,
                    });
                }
            }
        }
        Ok(())
    }
}

fn expect_kind(p: &StrategyProgram, kind: StrategyKind) -> Result<(), StrategyError> {
    if p.kind == kind {
        Ok(())
    } else {
        Err(StrategyError::KindMismatch {
            expected: kind,
            got: p.kind,
        })
    }
}

/// Runs an initialization program. Outputs are cell centers; movable cells
/// are clamped into the region and fixed cells keep their `.pl` position.
pub fn eval_init(
    p: &StrategyProgram,
    case: &BenchmarkCase,
    features: &FeatureTable,
    seed: u64,
) -> Result<PlacementState, StrategyError> {
    expect_kind(p, StrategyKind::Init)?;
    let n = case.num_cells();
    let out = p.run(features, &[], seed)?;
    let xs = out[0].to_vec(n);
    let ys = out[1].to_vec(n);
    let mut state = PlacementState::from_pl(case);
    for (name, v) in [("x_init", &xs), ("y_init", &ys)] {
        if case.movable().iter().any(|&i| !v[i].is_finite()) {
            return Err(StrategyError::NonFiniteInit(name.to_string()));
        }
    }
    for &i in case.movable() {
        state.set_center_clamped(case, i, xs[i], ys[i]);
    }
    Ok(state)
}

/// Gradient statistics visible to preconditioner programs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradStats {
    pub lambda: f64,
    pub wl_grad_norm: f64,
    pub density_grad_norm: f64,
    pub iteration: usize,
    pub overflow: f64,
}

/// Runs a preconditioner program: `diag = diag_scale * default`, clamped to
/// `[PRECOND_EPS, PRECOND_MAX]`. A zero scale therefore yields the absolute
/// floor `PRECOND_EPS`, not a multiple of the default.
pub fn eval_precond(
    p: &StrategyProgram,
    case: &BenchmarkCase,
    features: &FeatureTable,
    stats: &GradStats,
) -> Result<Vec<f64>, StrategyError> {
    expect_kind(p, StrategyKind::Precond)?;
    let extras = [
        stats.lambda,
        stats.wl_grad_norm,
        stats.density_grad_norm,
        stats.iteration as f64,
        stats.overflow,
    ];
    let out = p.run(features, &extras, stats.iteration as u64)?;
    let scale = out[0].to_vec(case.num_cells());
    if let Some(bad) = scale.iter().find(|v| !v.is_finite()) {
        return Err(StrategyError::Runtime(format!(
            "diag_scale entry {bad} is not finite"
        )));
    }
    Ok(default_precondition(case, stats.lambda)
        .into_iter()
        .zip(scale)
        .map(|(d, s)| (s * d).clamp(PRECOND_EPS, PRECOND_MAX))
        .collect())
}

/// Optimizer state visible to policy programs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub iteration: usize,
    pub overflow: f64,
    /// Overflow change since the previous iteration.
    pub overflow_delta: f64,
    /// Relative HPWL change since the previous iteration.
    pub wl_trend: f64,
    /// Overflow moved less than the plateau tolerance over the plateau window.
    pub plateau: bool,
    pub lambda: f64,
    pub step: f64,
}

/// Per-iteration optimizer controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutput {
    pub step_scale: f64,
    pub noise_level: f64,
    pub momentum_scale: f64,
}

impl Default for PolicyOutput {
    fn default() -> Self {
        Self {
            step_scale: 1.0,
            noise_level: 0.0,
            momentum_scale: 1.0,
        }
    }
}

/// Runs a policy program and clamps its outputs: `step_scale` to
/// `[0.01, 100]`, `noise_level` to `[0, 0.05 * span]`, `momentum_scale` to `[0, 2]`.
pub fn eval_opt_policy(
    p: &StrategyProgram,
    case: &BenchmarkCase,
    features: &FeatureTable,
    stats: &RunStats,
) -> Result<PolicyOutput, StrategyError> {
    expect_kind(p, StrategyKind::OptPolicy)?;
    let extras = [
        stats.iteration as f64,
        stats.overflow,
        stats.overflow_delta,
        stats.wl_trend,
        if stats.plateau { 1.0 } else { 0.0 },
        stats.lambda,
        stats.step,
    ];
    let out = p.run(features, &extras, stats.iteration as u64)?;
    let mut v = [0.0; 3];
    for (k, (val, name)) in out
        .iter()
        .zip(StrategyKind::OptPolicy.outputs())
        .enumerate()
    {
        let x = val.as_scalar().expect("checked scalar output");
        if !x.is_finite() {
            return Err(StrategyError::Runtime(format!("`{name}` is {x}")));
        }
        v[k] = x;
    }
    let span = case.region().span();
    Ok(PolicyOutput {
        step_scale: v[0].clamp(0.01, 100.0),
        noise_level: v[1].clamp(0.0, 0.05 * span),
        momentum_scale: v[2].clamp(0.0, 2.0),
    })
}
