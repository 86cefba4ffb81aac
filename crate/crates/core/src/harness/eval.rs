use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::bookshelf::BenchmarkCase;
use crate::dsl::{parse_strategy, StrategyBundle, StrategyKind};
use crate::placer::{run_global_place, EngineConfig, EvalResult};
use crate::util::short_hash;

/// Scores a strategy program. Implementations must be deterministic in
/// their inputs so results do not depend on scheduling.
pub trait Evaluator: Sync {
    fn evaluate(&self, kind: StrategyKind, source: &str) -> EvalResult;
}

/// Runs the placer with the candidate in its slot on top of a base bundle.
/// Every candidate uses the same placement seed so HPWLs are comparable.
pub struct PlacementEvaluator {
    pub case: BenchmarkCase,
    pub base: StrategyBundle,
    pub engine: EngineConfig,
    pub seed: u64,
    cache: Mutex<HashMap<(StrategyKind, String), EvalResult>>,
}

impl PlacementEvaluator {
    pub fn new(case: BenchmarkCase, base: StrategyBundle, engine: EngineConfig, seed: u64) -> Self {
        Self {
            case,
            base,
            engine,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// HPWL of the base bundle alone (all-default if the base is empty).
    pub fn baseline(&self) -> EvalResult {
        run_global_place(&self.case, &self.base, &self.engine, self.seed)
    }

    fn run(&self, kind: StrategyKind, source: &str) -> EvalResult {
        let program = match parse_strategy(source, kind) {
            Ok(p) => p,
            Err(e) => return EvalResult::error(e.to_string()),
        };
        let bundle = self.base.clone().with(program);
        run_global_place(&self.case, &bundle, &self.engine, self.seed)
    }
}

impl Evaluator for PlacementEvaluator {
    /// Results are memoized by program text; runtime is that of the first
    /// evaluation.
    fn evaluate(&self, kind: StrategyKind, source: &str) -> EvalResult {
        let key = (kind, short_hash(source));
        if let Some(r) = self.cache.lock().expect("eval cache poisoned").get(&key) {
            return r.clone();
        }
        let r = self.run(kind, source);
        self.cache
            .lock()
            .expect("eval cache poisoned")
            .insert(key, r.clone());
        r
    }
}

/// Evaluates with panics contained as `Error` results.
pub fn evaluate_isolated(evaluator: &dyn Evaluator, kind: StrategyKind, source: &str) -> EvalResult {
    catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(kind, source)))
        .unwrap_or_else(|_| EvalResult::error("evaluation panicked"))
}

/// Evaluates every candidate on a pool of `workers` threads. Results are in
/// input order and independent of the worker count.
pub fn evaluate_batch(
    evaluator: &dyn Evaluator,
    candidates: &[(StrategyKind, String)],
    workers: usize,
) -> Vec<EvalResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        candidates
            .par_iter()
            .map(|(kind, src)| evaluate_isolated(evaluator, *kind, src))
            .collect()
    })
}
