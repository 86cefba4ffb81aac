//! Offline stand-in for a language model.
//!
//! `mock_generate` samples programs from a handful of feature-using program
//! shapes with randomized holes; `mock_mutate` applies one local edit to an
//! existing program. Both are pure functions of their seed, and every output
//! parses (and type-checks for the kind it was generated for).

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsl::ast::{Ast, BinOp, Expr};
use crate::dsl::{infer_kind, parse, StrategyError, StrategyKind, Ty, VECTOR_FEATURES};
use crate::prompt::Outcome;
use crate::util::{derive_seed, stream_rng};

/// Rounds to three significant digits so sampled constants print short.
fn round3(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let m = 10f64.powi(2 - v.abs().log10().floor() as i32);
    (v * m).round() / m
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

impl Axis {
    fn pick(self, x: &'static str, y: &'static str) -> &'static str {
        match self {
            Axis::X => x,
            Axis::Y => y,
        }
    }

    fn stream(self) -> u32 {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    /// Helper bindings emitted ahead of the template body.
    lines: Vec<String>,
}

impl Sampler {
    fn new(seed: u64, label: &str) -> Self {
        Self {
            rng: stream_rng(derive_seed(seed, label), 0),
            lines: Vec::new(),
        }
    }

    /// Binds `expr` to a fresh local and returns its name.
    fn bind(&mut self, expr: String) -> String {
        let name = format!("w{}", self.lines.len() + 1);
        self.lines.push(format!("{name} = {expr}"));
        name
    }

    fn finish(self, body: String) -> String {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out + &body
    }

    fn c(&mut self, lo: f64, hi: f64) -> String {
        format!("{}", round3(self.rng.random_range(lo..hi)))
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random_bool(p)
    }

    fn pick<'a>(&mut self, items: &[&'a str]) -> &'a str {
        items.choose(&mut self.rng).copied().expect("non-empty choice")
    }

    /// A dimensionless, positive per-cell weight of order one. Composite
    /// weights are bound to locals to keep each statement shallow.
    fn weight(&mut self, depth: usize) -> String {
        let leaves = [
            "area / mean(area)",
            "area / median(area)",
            "degree / mean(degree)",
            "net_weight / mean(net_weight)",
            "pin_count / max(pin_count)",
            "sqrt(area / median(area))",
            "log(1 + degree)",
            "1 + is_macro",
        ];
        if depth == 0 || self.chance(0.5) {
            let leaf = self.pick(&leaves);
            if self.chance(0.2) {
                return format!("(1 + degree) ^ {}", self.c(0.2, 1.0));
            }
            return leaf.to_string();
        }
        let a = self.weight(depth - 1);
        let b = self.weight(depth - 1);
        let a = if a.contains(' ') { self.bind(a) } else { a };
        let b = if b.contains(' ') { self.bind(b) } else { b };
        let e = match self.rng.random_range(0..5) {
            0 => format!("{a} * {b}"),
            1 => format!("0.5 * ({a} + {b})"),
            2 => format!("clamp({a}, {}, {})", self.c(0.05, 0.5), self.c(1.5, 4.0)),
            3 => format!("max({a}, {})", self.c(0.1, 0.9)),
            _ => format!("select(is_macro, {a}, {b})"),
        };
        self.bind(e)
    }

    /// Positive scalar length scale.
    fn length(&mut self, axis: Axis) -> String {
        match self.rng.random_range(0..4) {
            0 => format!("{} * span", self.c(0.005, 0.08)),
            1 => format!("{} * init_sigma", self.c(1.0, 40.0)),
            2 => format!("{} * {}", self.c(0.01, 0.1), axis.pick("region_w", "region_h")),
            _ => format!("{} * sqrt(median_area)", self.c(0.1, 2.0)),
        }
    }

    fn init(mut self) -> String {
        let shape = self.rng.random_range(0..6);
        let mut out = String::new();
        let blend = self.c(0.2, 0.9);
        let spread = self.c(0.2, 0.9);
        let k = self.rng.random_range(2..6);
        let key = self.pick(&["area", "degree", "net_weight", "pin_count"]);
        match shape {
            1 => out.push_str(&format!("w = {blend}\n")),
            2 => out.push_str(&format!("spread = {spread} * sqrt(utilization)\n")),
            3 => out.push_str(&format!("s = clamp({}, 0.1, 2)\n", self.weight(1))),
            4 => {
                out.push_str(&format!(
                    "dens = clamp(utilization / {}, 0.5, 2)\n",
                    self.c(0.4, 0.9)
                ));
                out.push_str(&format!("grp = kmeans1d({key}, {k})\n"));
                out.push_str("rank = grp / max(grp)\n");
                out.push_str(&format!(
                    "noise = {} * span * net_weight / max(net_weight)\n",
                    self.c(0.002, 0.04)
                ));
                out.push_str(&format!("w = {blend}\n"));
            }
            _ => {}
        }
        for axis in [Axis::X, Axis::Y] {
            let var = axis.pick("x_init", "y_init");
            let center = axis.pick("center_x", "center_y");
            let nbr = axis.pick("fixed_nbr_x", "fixed_nbr_y");
            let size = axis.pick("region_w", "region_h");
            let s = axis.stream();
            let line = match shape {
                0 => format!(
                    "{var} = {center} + {} * init_sigma * rand_n({s})",
                    self.c(0.5, 40.0)
                ),
                1 => {
                    let amp = self.length(axis);
                    format!("{var} = w * {nbr} + (1 - w) * {center} + {amp} * rand_n({s})")
                }
                2 => format!("{var} = {center} + spread * {size} * (rand_u({s}) - 0.5)"),
                3 => {
                    let r = axis.pick("rx", "ry");
                    out.push_str(&format!("{r} = {} * {size} * s\n", self.c(0.1, 0.8)));
                    format!("{var} = {center} + {r} * (rand_u({s}) - 0.5)")
                }
                4 => {
                    let m = axis.pick("mx", "my");
                    out.push_str(&format!(
                        "{m} = {center} + dens * {} * {size} * (rank - 0.5)\n",
                        self.c(0.1, 0.6)
                    ));
                    let b = axis.pick("bx", "by");
                    out.push_str(&format!("{b} = w * {nbr} + (1 - w) * {center}\n"));
                    format!("{var} = select(is_macro, {m}, {b}) + noise * rand_n({s})")
                }
                _ => format!(
                    "{var} = {} + {} * rand_n({s})",
                    axis.pick("pl_x", "pl_y"),
                    self.length(axis)
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        self.finish(out)
    }

    fn precond(mut self) -> String {
        let body = match self.rng.random_range(0..5) {
            0 => {
                let w = self.weight(2);
                let w = if w.contains(' ') { self.bind(w) } else { w };
                format!("diag_scale = 1 + {} * ({w} - 1)\n", self.c(0.1, 1.0))
            }
            1 => format!(
                "w = net_weight / mean(net_weight)\ndiag_scale = clamp(w ^ {}, 0.2, 5)\n",
                self.c(0.2, 1.5)
            ),
            2 => {
                let w = self.weight(1);
                format!(
                    "boost = select(overflow > {}, {}, 1)\ndiag_scale = boost * ({w})\n",
                    self.c(0.2, 0.6),
                    self.c(1.0, 3.0),
                )
            }
            3 => format!(
                "diag_scale = 1 + {} * is_macro + {} * degree / max(degree)\n",
                self.c(0.0, 2.0),
                self.c(0.0, 1.0)
            ),
            _ => format!(
                "mix = clamp(lambda * density_grad_norm / (wl_grad_norm + 1e-9), 0.1, 10)\n\
                 diag_scale = 1 + {} * mix * area / mean(area)\n",
                self.c(0.01, 0.5)
            ),
        };
        self.finish(body)
    }

    fn policy(mut self) -> String {
        let (step, noise, momentum) = match self.rng.random_range(0..4) {
            0 => (self.c(0.7, 1.5), "0".to_string(), self.c(0.8, 1.1)),
            1 => (
                "1".to_string(),
                format!("select(plateau, {} * span, 0)", self.c(0.001, 0.01)),
                "1".to_string(),
            ),
            2 => (
                format!("clamp(1 - {} * overflow_delta, 0.5, 1.5)", self.c(1.0, 20.0)),
                format!(
                    "select(overflow > {}, {} * init_sigma, 0)",
                    self.c(0.3, 0.7),
                    self.c(1.0, 10.0)
                ),
                format!(
                    "select(wl_trend > {}, {}, 1)",
                    self.c(0.0, 0.05),
                    self.c(0.6, 0.95)
                ),
            ),
            _ => {
                let decay = format!("exp(-iteration / {})", self.c(50.0, 300.0));
                let decay = self.bind(decay);
                (
                    format!("{} + {} * {decay}", self.c(0.7, 1.0), self.c(0.1, 1.0)),
                    "0".to_string(),
                    "1".to_string(),
                )
            }
        };
        let body =
            format!("step_scale = {step}\nnoise_level = {noise}\nmomentum_scale = {momentum}\n");
        self.finish(body)
    }
}

fn canonical(source: &str) -> String {
    parse(source)
        .expect("mock templates are well-formed")
        .to_string()
}

/// Samples a program of `kind`. Deterministic in `(seed, kind)`.
pub fn mock_generate(seed: u64, kind: StrategyKind) -> String {
    let s = Sampler::new(seed, kind.as_str());
    let src = match kind {
        StrategyKind::Init => s.init(),
        StrategyKind::Precond => s.precond(),
        StrategyKind::OptPolicy => s.policy(),
    };
    canonical(&src)
}

/// Path to a node: statement index, then child indices.
type NodePath = (usize, Vec<usize>);

fn node_at<'a>(ast: &'a Ast, path: &NodePath) -> &'a Expr {
    let mut e = &ast.stmts[path.0].expr;
    for &i in &path.1 {
        e = child(e, i);
    }
    e
}

fn node_at_mut<'a>(ast: &'a mut Ast, path: &NodePath) -> &'a mut Expr {
    let mut e = &mut ast.stmts[path.0].expr;
    for &i in &path.1 {
        e = match e {
            Expr::Neg(inner) => inner.as_mut(),
            Expr::Bin(_, a, b) => {
                if i == 0 {
                    a.as_mut()
                } else {
                    b.as_mut()
                }
            }
            Expr::Call(_, args) => &mut args[i],
            _ => unreachable!("path follows existing children"),
        };
    }
    e
}

fn child(e: &Expr, i: usize) -> &Expr {
    match e {
        Expr::Neg(inner) => inner,
        Expr::Bin(_, a, b) => {
            if i == 0 {
                a
            } else {
                b
            }
        }
        Expr::Call(_, args) => &args[i],
        _ => unreachable!("path follows existing children"),
    }
}

/// Every node, with a flag for literal arguments that must stay literals
/// (random streams and cluster counts).
fn collect(ast: &Ast) -> Vec<(NodePath, bool)> {
    fn walk(e: &Expr, stmt: usize, path: &mut Vec<usize>, locked: bool, out: &mut Vec<(NodePath, bool)>) {
        out.push(((stmt, path.clone()), locked));
        let lock_arg = |name: &str, k: usize| {
            matches!(name, "rand_n" | "rand_u") || (name == "kmeans1d" && k == 1)
        };
        match e {
            Expr::Neg(inner) => {
                path.push(0);
                walk(inner, stmt, path, false, out);
                path.pop();
            }
            Expr::Bin(_, a, b) => {
                for (k, c) in [a, b].into_iter().enumerate() {
                    path.push(k);
                    walk(c, stmt, path, false, out);
                    path.pop();
                }
            }
            Expr::Call(name, args) => {
                for (k, c) in args.iter().enumerate() {
                    path.push(k);
                    walk(c, stmt, path, lock_arg(name, k), out);
                    path.pop();
                }
            }
            Expr::Num(_) | Expr::Var(_) => {}
        }
    }
    let mut out = Vec::new();
    for (i, s) in ast.stmts.iter().enumerate() {
        walk(&s.expr, i, &mut Vec::new(), false, &mut out);
    }
    out
}

fn infer(e: &Expr, locals: &HashMap<&str, Ty>) -> Ty {
    match e {
        Expr::Num(_) => Ty::Scalar,
        Expr::Var(name) => {
            if let Some(t) = locals.get(name.as_str()) {
                *t
            } else if VECTOR_FEATURES.contains(&name.as_str()) {
                Ty::Vector
            } else {
                Ty::Scalar
            }
        }
        Expr::Neg(inner) => infer(inner, locals),
        Expr::Bin(_, a, b) => join(infer(a, locals), infer(b, locals)),
        Expr::Call(name, args) => match name.as_str() {
            "mean" | "std" | "sum" | "median" | "quantile" => Ty::Scalar,
            "min" | "max" if args.len() == 1 => Ty::Scalar,
            "rand_n" | "rand_u" | "kmeans1d" => Ty::Vector,
            _ => args
                .iter()
                .fold(Ty::Scalar, |t, a| join(t, infer(a, locals))),
        },
    }
}

fn join(a: Ty, b: Ty) -> Ty {
    if a == Ty::Vector || b == Ty::Vector {
        Ty::Vector
    } else {
        Ty::Scalar
    }
}

/// Local types in scope just before statement `upto`.
fn locals_before(ast: &Ast, upto: usize) -> HashMap<&str, Ty> {
    let mut locals = HashMap::new();
    for s in &ast.stmts[..upto] {
        let t = infer(&s.expr, &locals);
        locals.insert(s.name.as_str(), t);
    }
    locals
}

const SWAP_GROUPS: [&[&str]; 3] = [&["mean", "median"], &["min", "max"], &["rand_n", "rand_u"]];

const SCALAR_SWAPS: [&[&str]; 3] = [
    &["center_x", "center_y"],
    &["region_w", "region_h", "span"],
    &["utilization", "median_area", "init_sigma"],
];

const VECTOR_SWAPS: [&[&str]; 3] = [
    &["area", "degree", "net_weight", "pin_count", "width", "height"],
    &["fixed_nbr_x", "pl_x"],
    &["fixed_nbr_y", "pl_y"],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MutationOp {
    Constant,
    Builtin,
    Regenerate,
    Feature,
}

const OPS: [MutationOp; 4] = [
    MutationOp::Constant,
    MutationOp::Builtin,
    MutationOp::Regenerate,
    MutationOp::Feature,
];

/// Applies one local edit to `source`, chosen by `seed`: perturb a constant,
/// swap a builtin for a compatible one, regenerate a subtree of the same
/// type, or swap a feature for a related one.
pub fn mock_mutate(seed: u64, source: &str) -> Result<String, StrategyError> {
    let ast = parse(source)?;
    let kind = infer_kind(&ast);
    let parent = ast.to_string();
    let mut rng = stream_rng(derive_seed(seed, "mutate"), 0);
    let first = rng.random_range(0..OPS.len());
    for attempt in 0..16 {
        let op = OPS[(first + attempt) % OPS.len()];
        if let Some(out) = apply(op, &ast, kind, &mut rng) {
            let text = out.to_string();
            if text != parent {
                return Ok(text);
            }
        }
    }
    // Nothing applicable changed the program: append a harmless tweak to
    // the first statement so the child still differs.
    let mut out = ast.clone();
    if let Some(s) = out.stmts.first_mut() {
        let e = std::mem::replace(&mut s.expr, Expr::Num(0.0));
        s.expr = Expr::bin(BinOp::Mul, e, Expr::Num(round3(1.0 + 0.1 * rng.random::<f64>())));
    }
    Ok(out.to_string())
}

fn apply(op: MutationOp, ast: &Ast, kind: Option<StrategyKind>, rng: &mut ChaCha8Rng) -> Option<Ast> {
    let nodes = collect(ast);
    let mut out = ast.clone();
    match op {
        MutationOp::Constant => {
            let cands: Vec<_> = nodes
                .iter()
                .filter(|(p, locked)| !locked && matches!(node_at(ast, p), Expr::Num(_)))
                .collect();
            let (path, _) = cands.choose(rng)?;
            let Expr::Num(v) = node_at(ast, path) else {
                unreachable!()
            };
            let factor = Normal::new(0.0, 0.3).expect("valid sigma").sample(rng);
            let nv = if *v == 0.0 {
                round3(0.01 * factor)
            } else {
                round3(v * factor.exp())
            };
            *node_at_mut(&mut out, path) = Expr::Num(nv);
        }
        MutationOp::Builtin => {
            let cands: Vec<_> = nodes
                .iter()
                .filter_map(|(p, _)| match node_at(ast, p) {
                    Expr::Call(name, args) => SWAP_GROUPS
                        .iter()
                        .find(|g| g.contains(&name.as_str()))
                        // min/max only swap within the same arity.
                        .map(|g| (p, *g, args.len())),
                    _ => None,
                })
                .collect();
            let (path, group, _) = cands.choose(rng)?;
            let Expr::Call(name, args) = node_at(ast, path) else {
                unreachable!()
            };
            let others: Vec<&str> = group.iter().copied().filter(|g| g != name).collect();
            let new = others.choose(rng)?;
            *node_at_mut(&mut out, path) = Expr::Call(new.to_string(), args.clone());
        }
        MutationOp::Regenerate => {
            let kind = kind?;
            let cands: Vec<_> = nodes
                .iter()
                .filter(|(p, locked)| !locked && !p.1.is_empty())
                .collect();
            let (path, _) = cands.choose(rng)?;
            let locals = locals_before(ast, path.0);
            let ty = infer(node_at(ast, path), &locals);
            let sub = random_subtree(kind, ty, rng);
            *node_at_mut(&mut out, path) = sub;
        }
        MutationOp::Feature => {
            let cands: Vec<_> = nodes
                .iter()
                .filter_map(|(p, _)| match node_at(ast, p) {
                    Expr::Var(name) => SCALAR_SWAPS
                        .iter()
                        .chain(VECTOR_SWAPS.iter())
                        .find(|g| g.contains(&name.as_str()))
                        .map(|g| (p, *g)),
                    _ => None,
                })
                .collect();
            let (path, group) = cands.choose(rng)?;
            let Expr::Var(name) = node_at(ast, path) else {
                unreachable!()
            };
            let others: Vec<&str> = group.iter().copied().filter(|g| g != name).collect();
            let new = others.choose(rng)?;
            *node_at_mut(&mut out, path) = Expr::var(new);
        }
    }
    Some(out)
}

/// A small random expression of type `ty`, built from safe operations so it
/// stays finite on any case.
fn random_subtree(kind: StrategyKind, ty: Ty, rng: &mut ChaCha8Rng) -> Expr {
    let mut s = Sampler {
        rng: stream_rng(rng.random(), 0),
        lines: Vec::new(),
    };
    let text = match ty {
        Ty::Vector => {
            let w = s.weight(0);
            if kind == StrategyKind::Init && s.chance(0.5) {
                let axis = if s.chance(0.5) { Axis::X } else { Axis::Y };
                format!("{} * ({w})", s.length(axis))
            } else {
                w
            }
        }
        Ty::Scalar => {
            let mut pool: Vec<String> = vec![
                s.c(0.05, 2.0),
                format!("{} * utilization", s.c(0.1, 2.0)),
                format!("mean({})", s.weight(0)),
            ];
            for e in kind.extras() {
                if matches!(*e, "overflow" | "plateau") {
                    pool.push(format!("{} * {e}", s.c(0.1, 2.0)));
                }
            }
            pool.choose(&mut s.rng).cloned().expect("non-empty pool")
        }
    };
    let ast = parse(&format!("t = {text}")).expect("subtree templates are well-formed");
    ast.stmts.into_iter().next().expect("one statement").expr
}

/// Canned prose with a seeded choice of sentences, standing in for the
/// free-text steps of the pipeline.
pub(crate) fn mock_prose(seed: u64, topic: &str, kind: StrategyKind) -> String {
    let mut s = Sampler::new(seed, topic);
    let observations = [
        "The current program ignores the netlist: every cell starts from the same statistics.",
        "Cells that share nets with fixed terminals could start close to those terminals.",
        "Large cells dominate early density overflow, so their treatment matters most.",
        "Uniform treatment of all cells wastes the degree and net weight information.",
        "Noise amplitude is not tied to any placement input, so it is either too weak or too strong.",
        "Density pressure grows geometrically, so early decisions are hard to undo.",
    ];
    let ideas = [
        "Blend each cell's start point towards the centroid of its fixed neighbours.",
        "Cluster cells by size and lay the clusters out in bands scaled by utilization.",
        "Scale the preconditioner by normalized net weight so heavy nets move carefully.",
        "Inject noise only while overflow is stuck, with an amplitude tied to the region span.",
        "Damp momentum when wirelength starts to rise.",
        "Use degree as a proxy for how constrained a cell is and spread the free cells more.",
    ];
    let mut text = String::new();
    match topic {
        "idea" => {
            text.push_str(&format!("Idea for the {kind} component: "));
            text.push_str(s.pick(&ideas));
        }
        "reflect_fail" => {
            text.push_str(
                "The evolved program failed to run. Keep the parent's structure and change one \
                 term at a time; avoid operations that can leave their domain.",
            );
        }
        "reflect_better" => {
            text.push_str("The change helped. Push further in the same direction: ");
            text.push_str(s.pick(&ideas));
        }
        "reflect_worse" => {
            text.push_str("The change hurt. Return to the parent and try a different lever: ");
            text.push_str(s.pick(&ideas));
        }
        _ => {
            text.push_str(&format!("Analysis of the {kind} component. "));
            let k = s.rng.random_range(2..4);
            let picked: Vec<&str> = observations.choose_multiple(&mut s.rng, k).copied().collect();
            text.push_str(&picked.join(" "));
        }
    }
    text.push('\n');
    text
}

/// What the mock should produce for one chat request. Remote backends ignore
/// it; it exists so the mock never has to parse prompts.
#[derive(Debug, Clone, PartialEq)]
pub enum MockTask {
    Analysis { kind: StrategyKind },
    Idea { kind: StrategyKind },
    Reference { kind: StrategyKind },
    Candidate { kind: StrategyKind, reference: Option<String> },
    Evolve { kind: StrategyKind, parent: String },
    Reflect { kind: StrategyKind, outcome: Outcome },
    Refine {
        kind: StrategyKind,
        parent: String,
        child: String,
        outcome: Outcome,
    },
    /// Free-form request; the mock answers with a fixed acknowledgement.
    Other,
}

fn fenced(intro: &str, src: &str) -> String {
    format!("{intro}\n\n```strat\n{}\n```\n", src.trim_end())
}

/// The mock's reply to one request.
pub(crate) fn mock_reply(seed: u64, task: &MockTask) -> String {
    let mut rng = stream_rng(derive_seed(seed, "reply"), 0);
    match task {
        MockTask::Analysis { kind } => mock_prose(seed, "analysis", *kind),
        MockTask::Idea { kind } => mock_prose(seed, "idea", *kind),
        MockTask::Reference { kind } => {
            fenced("Reference implementation:", &mock_generate(seed, *kind))
        }
        MockTask::Candidate { kind, reference } => {
            let src = match reference {
                Some(r) if rng.random_bool(0.5) => {
                    mock_mutate(seed, r).unwrap_or_else(|_| mock_generate(seed, *kind))
                }
                Some(r) if parse(r).is_ok() => r.clone(),
                _ => mock_generate(seed, *kind),
            };
            fenced("Final candidate:", &src)
        }
        MockTask::Evolve { kind, parent } => {
            let src = mock_mutate(seed, parent).unwrap_or_else(|_| mock_generate(seed, *kind));
            fenced("Evolved program:", &src)
        }
        MockTask::Reflect { kind, outcome } => {
            let topic = match outcome {
                Outcome::ExecFailure => "reflect_fail",
                Outcome::Improved => "reflect_better",
                Outcome::Degraded => "reflect_worse",
            };
            mock_prose(seed, topic, *kind)
        }
        MockTask::Refine {
            kind,
            parent,
            child,
            outcome,
        } => {
            let base = if *outcome == Outcome::Improved {
                child
            } else {
                parent
            };
            let src = mock_mutate(seed, base).unwrap_or_else(|_| mock_generate(seed, *kind));
            fenced("Refined program:", &src)
        }
        MockTask::Other => "Acknowledged.\n".to_string(),
    }
}
