//! Name resolution, type checking and static cost accounting.

use super::ast::{Ast, BinOp, Expr};
use super::features::{SCALAR_FEATURES, VECTOR_FEATURES};
use super::{StrategyError, StrategyKind};

/// Static evaluation budget, in node evaluations per cell.
pub const MAX_COST_PER_CELL: u64 = 1_000_000;
pub const MAX_STATEMENTS: usize = 512;
pub const MAX_KMEANS_K: usize = 16;
pub const KMEANS_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Scalar,
    Vector,
}

impl Ty {
    fn join(self, other: Ty) -> Ty {
        if self == Ty::Vector || other == Ty::Vector {
            Ty::Vector
        } else {
            Ty::Scalar
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Mean,
    Std,
    Sum,
    MinOf,
    MaxOf,
    Min,
    Max,
    Quantile,
    Clamp,
    Abs,
    Log,
    Exp,
    Sqrt,
    RandN(u64),
    RandU(u64),
    KMeans(usize),
    Select,
}

/// Builtin names accepted by the checker.
pub const BUILTINS: [&str; 16] = [
    "mean", "std", "sum", "min", "max", "quantile", "clamp", "abs", "log", "exp", "sqrt", "rand_n",
    "rand_u", "kmeans1d", "select", "median",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    VecFeature(usize),
    ScalarFeature(usize),
    Extra(usize),
    Local(usize),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Call(Builtin, Vec<CExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CExpr {
    pub node: Node,
    pub ty: Ty,
}

/// A checked program: one slot per statement, evaluated in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    pub stmts: Vec<CExpr>,
    /// Slot holding the final value of each required output, in kind order.
    pub outputs: Vec<usize>,
    pub cost_per_cell: u64,
    /// Number of kmeans1d calls; each gets its own random stream.
    pub kmeans_calls: usize,
}

struct Checker<'a> {
    kind: StrategyKind,
    locals: Vec<(&'a str, usize, Ty)>,
    cost: u64,
    kmeans_calls: usize,
    line: usize,
}

pub fn check(ast: &Ast, kind: StrategyKind) -> Result<Compiled, StrategyError> {
    if ast.stmts.len() > MAX_STATEMENTS {
        return Err(StrategyError::Budget(format!(
            "{} statements, limit is {MAX_STATEMENTS}",
            ast.stmts.len()
        )));
    }
    let mut c = Checker {
        kind,
        locals: Vec::new(),
        cost: 0,
        kmeans_calls: 0,
        line: 0,
    };
    let mut stmts = Vec::with_capacity(ast.stmts.len());
    for (slot, s) in ast.stmts.iter().enumerate() {
        c.line = s.line;
        let name = s.name.as_str();
        if is_input(name, kind) || BUILTINS.contains(&name) {
            return Err(c.type_error(format!("cannot assign to reserved name `{name}`")));
        }
        let e = c.expr(&s.expr)?;
        let ty = e.ty;
        if let Some(pos) = kind.outputs().iter().position(|o| *o == name) {
            let want = kind.output_types()[pos];
            if want == Ty::Scalar && ty == Ty::Vector {
                return Err(c.type_error(format!("output `{name}` must be a scalar")));
            }
        }
        c.locals.retain(|(n, _, _)| *n != name);
        c.locals.push((name, slot, ty));
        stmts.push(e);
        if c.cost > MAX_COST_PER_CELL {
            return Err(StrategyError::Budget(format!(
                "static cost exceeds {MAX_COST_PER_CELL} evaluations per cell"
            )));
        }
    }
    let mut outputs = Vec::new();
    for name in kind.outputs() {
        match c.locals.iter().find(|(n, _, _)| n == name) {
            Some(&(_, slot, _)) => outputs.push(slot),
            None => return Err(StrategyError::MissingOutput(name.to_string())),
        }
    }
    Ok(Compiled {
        stmts,
        outputs,
        cost_per_cell: c.cost,
        kmeans_calls: c.kmeans_calls,
    })
}

fn is_input(name: &str, kind: StrategyKind) -> bool {
    VECTOR_FEATURES.contains(&name)
        || SCALAR_FEATURES.contains(&name)
        || kind.extras().contains(&name)
}

fn literal_index(e: &Expr, max: u64) -> Option<u64> {
    match e {
        Expr::Num(v) if *v >= 0.0 && v.fract() == 0.0 && *v <= max as f64 => Some(*v as u64),
        _ => None,
    }
}

impl<'a> Checker<'a> {
    fn type_error(&self, message: String) -> StrategyError {
        StrategyError::Type(format!("line {}: {message}", self.line))
    }

    fn expr(&mut self, e: &'a Expr) -> Result<CExpr, StrategyError> {
        self.cost += 1;
        Ok(match e {
            Expr::Num(v) => CExpr {
                node: Node::Const(*v),
                ty: Ty::Scalar,
            },
            Expr::Var(name) => self.var(name)?,
            Expr::Neg(inner) => {
                let inner = self.expr(inner)?;
                CExpr {
                    ty: inner.ty,
                    node: Node::Neg(Box::new(inner)),
                }
            }
            Expr::Bin(op, a, b) => {
                let a = self.expr(a)?;
                let b = self.expr(b)?;
                CExpr {
                    ty: a.ty.join(b.ty),
                    node: Node::Bin(*op, Box::new(a), Box::new(b)),
                }
            }
            Expr::Call(name, args) => self.call(name, args, e)?,
        })
    }

    fn var(&self, name: &str) -> Result<CExpr, StrategyError> {
        if let Some(&(_, slot, ty)) = self.locals.iter().find(|(n, _, _)| *n == name) {
            return Ok(CExpr {
                node: Node::Local(slot),
                ty,
            });
        }
        if let Some(k) = VECTOR_FEATURES.iter().position(|f| *f == name) {
            return Ok(CExpr {
                node: Node::VecFeature(k),
                ty: Ty::Vector,
            });
        }
        if let Some(k) = SCALAR_FEATURES.iter().position(|f| *f == name) {
            return Ok(CExpr {
                node: Node::ScalarFeature(k),
                ty: Ty::Scalar,
            });
        }
        if let Some(k) = self.kind.extras().iter().position(|f| *f == name) {
            return Ok(CExpr {
                node: Node::Extra(k),
                ty: Ty::Scalar,
            });
        }
        Err(self.type_error(format!("unknown identifier `{name}`")))
    }

    fn call(&mut self, name: &str, args: &'a [Expr], whole: &Expr) -> Result<CExpr, StrategyError> {
        let arity = |n: usize| -> Result<(), StrategyError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(self.type_error(format!(
                    "`{name}` takes {n} argument(s), got {} in `{whole}`",
                    args.len()
                )))
            }
        };
        // Stream and cluster-count arguments must be literals so the cost
        // and the random streams are known statically.
        let (builtin, extra_cost) = match name {
            "mean" | "std" | "sum" | "median" => {
                arity(1)?;
                let b = match name {
                    "mean" => Builtin::Mean,
                    "std" => Builtin::Std,
                    "sum" => Builtin::Sum,
                    _ => Builtin::Quantile,
                };
                (b, if name == "median" { 32 } else { 2 })
            }
            "min" | "max" => match args.len() {
                1 => (
                    if name == "min" {
                        Builtin::MinOf
                    } else {
                        Builtin::MaxOf
                    },
                    1,
                ),
                2 => (
                    if name == "min" {
                        Builtin::Min
                    } else {
                        Builtin::Max
                    },
                    1,
                ),
                n => {
                    return Err(self.type_error(format!(
                        "`{name}` takes 1 or 2 arguments, got {n} in `{whole}`"
                    )))
                }
            },
            "quantile" => {
                arity(2)?;
                (Builtin::Quantile, 32)
            }
            "clamp" => {
                arity(3)?;
                (Builtin::Clamp, 1)
            }
            "abs" | "log" | "exp" | "sqrt" => {
                arity(1)?;
                let b = match name {
                    "abs" => Builtin::Abs,
                    "log" => Builtin::Log,
                    "exp" => Builtin::Exp,
                    _ => Builtin::Sqrt,
                };
                (b, 1)
            }
            "rand_n" | "rand_u" => {
                arity(1)?;
                let k = literal_index(&args[0], u64::from(u32::MAX)).ok_or_else(|| {
                    self.type_error(format!(
                        "`{name}` needs a non-negative integer literal stream"
                    ))
                })?;
                let b = if name == "rand_n" {
                    Builtin::RandN(k)
                } else {
                    Builtin::RandU(k)
                };
                return Ok(self.leaf_call(b, 4));
            }
            "kmeans1d" => {
                arity(2)?;
                let k = literal_index(&args[1], MAX_KMEANS_K as u64)
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| {
                        self.type_error(format!(
                            "`kmeans1d` needs an integer literal k in 1..={MAX_KMEANS_K}"
                        ))
                    })? as usize;
                let v = self.expr(&args[0])?;
                self.want(&v, Ty::Vector, name)?;
                self.kmeans_calls += 1;
                self.cost += (KMEANS_ITERS * (k + 1)) as u64 + 32;
                return Ok(CExpr {
                    node: Node::Call(Builtin::KMeans(k), vec![v]),
                    ty: Ty::Vector,
                });
            }
            "select" => {
                arity(3)?;
                (Builtin::Select, 1)
            }
            _ => return Err(self.type_error(format!("unknown function `{name}`"))),
        };
        self.cost += extra_cost;
        let mut cargs = Vec::with_capacity(args.len() + 1);
        for a in args {
            cargs.push(self.expr(a)?);
        }
        let ty = match builtin {
            Builtin::Mean | Builtin::Std | Builtin::Sum | Builtin::MinOf | Builtin::MaxOf => {
                self.want(&cargs[0], Ty::Vector, name)?;
                Ty::Scalar
            }
            Builtin::Quantile => {
                self.want(&cargs[0], Ty::Vector, name)?;
                if name == "median" {
                    cargs.push(CExpr {
                        node: Node::Const(0.5),
                        ty: Ty::Scalar,
                    });
                } else {
                    self.want(&cargs[1], Ty::Scalar, name)?;
                }
                Ty::Scalar
            }
            _ => cargs.iter().fold(Ty::Scalar, |t, a| t.join(a.ty)),
        };
        Ok(CExpr {
            node: Node::Call(builtin, cargs),
            ty,
        })
    }

    fn leaf_call(&mut self, b: Builtin, cost: u64) -> CExpr {
        self.cost += cost;
        CExpr {
            node: Node::Call(b, Vec::new()),
            ty: Ty::Vector,
        }
    }

    fn want(&self, e: &CExpr, ty: Ty, name: &str) -> Result<(), StrategyError> {
        if e.ty == ty {
            Ok(())
        } else {
            let what = if ty == Ty::Vector {
                "a per-cell vector"
            } else {
                "a scalar"
            };
            Err(self.type_error(format!("`{name}` expects {what}")))
        }
    }
}
