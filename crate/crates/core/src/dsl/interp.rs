//! Tree-walking evaluator for checked programs.
//!
//! Evaluation is strictly left to right with plain IEEE operations, so
//! results are reproducible bit for bit.

use std::sync::Arc;

use rand::Rng;

use super::ast::BinOp;
use super::check::{Builtin, CExpr, Compiled, Node, KMEANS_ITERS};
use super::features::{FeatureTable, SCALAR_FEATURES, VECTOR_FEATURES};
use super::StrategyError;
use crate::placer::{normal_vector, uniform_vector};
use crate::util::{quantile, stream_rng};

/// Random streams used by `kmeans1d` initialization start here.
const KMEANS_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Arc<[f64]>),
}

impl Value {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::Vector(_) => None,
        }
    }

    /// Vector view, broadcasting a scalar to `n` entries.
    pub fn to_vec(&self, n: usize) -> Vec<f64> {
        match self {
            Value::Scalar(v) => vec![*v; n],
            Value::Vector(v) => v.to_vec(),
        }
    }

    fn get(&self, i: usize) -> f64 {
        match self {
            Value::Scalar(v) => *v,
            Value::Vector(v) => v[i],
        }
    }
}

pub struct Env<'a> {
    pub features: &'a FeatureTable,
    pub extras: &'a [f64],
    pub seed: u64,
}

fn runtime(message: String) -> StrategyError {
    StrategyError::Runtime(message)
}

/// Runs every statement and returns the values of the required outputs.
pub fn run(prog: &Compiled, env: &Env<'_>) -> Result<Vec<Value>, StrategyError> {
    let n = env.features.len();
    let mut ev = Evaluator {
        env,
        n,
        slots: Vec::with_capacity(prog.stmts.len()),
        kmeans_seen: 0,
    };
    for s in &prog.stmts {
        let v = ev.eval(s)?;
        ev.slots.push(v);
    }
    Ok(prog.outputs.iter().map(|&s| ev.slots[s].clone()).collect())
}

struct Evaluator<'a, 'b> {
    env: &'b Env<'a>,
    n: usize,
    slots: Vec<Value>,
    kmeans_seen: u64,
}

fn map1(v: &Value, f: impl Fn(f64) -> f64) -> Value {
    match v {
        Value::Scalar(x) => Value::Scalar(f(*x)),
        Value::Vector(xs) => Value::Vector(xs.iter().map(|&x| f(x)).collect()),
    }
}

fn map_n(args: &[Value], n: usize, f: impl Fn(&[f64]) -> f64) -> Value {
    let mut buf = vec![0.0; args.len()];
    if args.iter().all(|a| matches!(a, Value::Scalar(_))) {
        for (b, a) in buf.iter_mut().zip(args) {
            *b = a.get(0);
        }
        return Value::Scalar(f(&buf));
    }
    let out: Vec<f64> = (0..n)
        .map(|i| {
            for (b, a) in buf.iter_mut().zip(args) {
                *b = a.get(i);
            }
            f(&buf)
        })
        .collect();
    Value::Vector(out.into())
}

fn vector(v: &Value) -> &[f64] {
    match v {
        Value::Vector(xs) => xs,
        Value::Scalar(_) => unreachable!("checker guarantees a vector argument"),
    }
}

impl Evaluator<'_, '_> {
    fn eval(&mut self, e: &CExpr) -> Result<Value, StrategyError> {
        let f = self.env.features;
        Ok(match &e.node {
            Node::Const(v) => Value::Scalar(*v),
            Node::VecFeature(k) => Value::Vector(
                f.vector(VECTOR_FEATURES[*k])
                    .expect("feature names are checked")
                    .clone(),
            ),
            Node::ScalarFeature(k) => Value::Scalar(
                f.scalar(SCALAR_FEATURES[*k])
                    .expect("feature names are checked"),
            ),
            Node::Extra(k) => Value::Scalar(self.env.extras[*k]),
            Node::Local(s) => self.slots[*s].clone(),
            Node::Neg(inner) => map1(&self.eval(inner)?, |x| -x),
            Node::Bin(op, a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                binary(*op, &a, &b, self.n)
            }
            Node::Call(b, args) => self.call(*b, args)?,
        })
    }

    fn call(&mut self, b: Builtin, args: &[CExpr]) -> Result<Value, StrategyError> {
        let n = self.n;
        let seed = self.env.seed;
        match b {
            Builtin::RandN(k) => return Ok(Value::Vector(normal_vector(seed, k, n).into())),
            Builtin::RandU(k) => return Ok(Value::Vector(uniform_vector(seed, k, n).into())),
            _ => {}
        }
        let mut vals = Vec::with_capacity(args.len());
        for a in args {
            vals.push(self.eval(a)?);
        }
        Ok(match b {
            Builtin::Mean => {
                let v = vector(&vals[0]);
                Value::Scalar(v.iter().sum::<f64>() / v.len() as f64)
            }
            Builtin::Std => {
                let v = vector(&vals[0]);
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
                Value::Scalar(var.sqrt())
            }
            Builtin::Sum => Value::Scalar(vector(&vals[0]).iter().sum()),
            Builtin::MinOf => Value::Scalar(
                vector(&vals[0])
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min),
            ),
            Builtin::MaxOf => Value::Scalar(
                vector(&vals[0])
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max),
            ),
            Builtin::Min => map_n(&vals, n, |a| a[0].min(a[1])),
            Builtin::Max => map_n(&vals, n, |a| a[0].max(a[1])),
            Builtin::Quantile => {
                let q = vals[1].as_scalar().expect("checked scalar");
                if !(0.0..=1.0).contains(&q) {
                    return Err(runtime(format!("quantile level {q} outside [0, 1]")));
                }
                Value::Scalar(quantile(vector(&vals[0]), q))
            }
            Builtin::Clamp => map_n(&vals, n, |a| a[0].max(a[1]).min(a[2])),
            Builtin::Abs => map1(&vals[0], f64::abs),
            Builtin::Exp => map1(&vals[0], f64::exp),
            Builtin::Log => {
                check_domain(&vals[0], "log", |x| x > 0.0)?;
                map1(&vals[0], f64::ln)
            }
            Builtin::Sqrt => {
                check_domain(&vals[0], "sqrt", |x| x >= 0.0)?;
                map1(&vals[0], f64::sqrt)
            }
            Builtin::Select => map_n(&vals, n, |a| if a[0] != 0.0 { a[1] } else { a[2] }),
            Builtin::KMeans(k) => {
                let stream = KMEANS_STREAM_BASE + self.kmeans_seen;
                self.kmeans_seen += 1;
                Value::Vector(kmeans1d(vector(&vals[0]), k, seed, stream)?.into())
            }
            Builtin::RandN(_) | Builtin::RandU(_) => unreachable!("handled above"),
        })
    }
}

fn check_domain(v: &Value, name: &str, ok: impl Fn(f64) -> bool) -> Result<(), StrategyError> {
    let bad = match v {
        Value::Scalar(x) => (!ok(*x)).then_some(*x),
        Value::Vector(xs) => xs.iter().copied().find(|&x| !ok(x)),
    };
    match bad {
        Some(x) => Err(runtime(format!("domain error: {name}({x})"))),
        None => Ok(()),
    }
}

fn binary(op: BinOp, a: &Value, b: &Value, n: usize) -> Value {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(op.apply(*x, *y)),
        _ => Value::Vector((0..n).map(|i| op.apply(a.get(i), b.get(i))).collect()),
    }
}

/// Lloyd's algorithm in one dimension with k-means++ seeding; returns the
/// centroid assigned to each element. Ties go to the lower cluster index.
pub fn kmeans1d(v: &[f64], k: usize, seed: u64, stream: u64) -> Result<Vec<f64>, StrategyError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(runtime("kmeans1d input has non-finite entries".into()));
    }
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = stream_rng(seed, stream);
    let mut centroids = vec![v[rng.random_range(0..v.len())]];
    let mut d2: Vec<f64> = v.iter().map(|x| (x - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = v.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            v[pick]
        } else {
            centroids[0]
        };
        centroids.push(next);
        for (d, x) in d2.iter_mut().zip(v) {
            *d = d.min((x - next).powi(2));
        }
    }
    let mut assign = vec![0usize; v.len()];
    for _ in 0..KMEANS_ITERS {
        for (a, x) in assign.iter_mut().zip(v) {
            let mut best = 0;
            for (j, c) in centroids.iter().enumerate().skip(1) {
                if (x - c).abs() < (x - centroids[best]).abs() {
                    best = j;
                }
            }
            *a = best;
        }
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for (&a, x) in assign.iter().zip(v) {
            sum[a] += x;
            cnt[a] += 1;
        }
        let mut moved = false;
        for j in 0..k {
            if cnt[j] > 0 {
                let c = sum[j] / cnt[j] as f64;
                moved |= c != centroids[j];
                centroids[j] = c;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(assign.iter().map(|&a| centroids[a]).collect())
}
