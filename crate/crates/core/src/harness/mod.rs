//! Candidate generation and evaluation at batch scale, plus reporting.

mod eval;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{evaluate_batch, evaluate_isolated, Evaluator, PlacementEvaluator};

use std::path::Path;

use crate::dse::{normalized_loss, run_dse, DesignPoint, DseConfig, DseError, DseOutcome, DseStep, PriorMean};
use crate::dsl::StrategyKind;
use crate::store::{JsonlWriter, StoreError, SCHEMA_VERSION};
use crate::llm::{EmbeddingVector, Gateway};
use crate::select::{select_diverse, CandidatePool, SelectError};
use crate::placer::EvalResult;
use crate::prompt::{cot_generate, CandidateAlgorithm, GenerationContext, TemplateSet};
use crate::util::{derive_seed, short_hash};

/// Runs `n` independent generation chains. Candidate `i` uses a seed
/// derived from `(seed, i)`, so the output does not depend on scheduling.
pub fn generate_candidates(
    gateway: &Gateway,
    templates: &TemplateSet,
    ctx: &GenerationContext,
    n: usize,
    seed: u64,
) -> Vec<CandidateAlgorithm> {
    (0..n)
        .into_par_iter()
        .map(|i| cot_generate(gateway, templates, ctx, derive_seed(seed, &format!("gen/{i}"))))
        .collect()
}

/// One evaluated candidate as kept in a pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub id: String,
    pub kind: StrategyKind,
    pub source: Option<String>,
    pub eval: EvalResult,
    pub embedding: Option<EmbeddingVector>,
    /// Why the candidate is infeasible, if it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Evaluates and embeds generated candidates. Infeasible ones get an
/// `Error` result and no embedding.
pub fn evaluate_candidates(
    gateway: &Gateway,
    evaluator: &dyn Evaluator,
    candidates: &[CandidateAlgorithm],
    workers: usize,
) -> Vec<PoolRecord> {
    let feasible: Vec<(StrategyKind, String)> = candidates
        .iter()
        .filter(|c| c.is_feasible())
        .map(|c| (c.kind, c.source.clone().expect("feasible candidates have source")))
        .collect();
    let mut results = evaluate_batch(evaluator, &feasible, workers).into_iter();
    candidates
        .iter()
        .map(|c| {
            let id = c
                .source
                .as_deref()
                .map(short_hash)
                .unwrap_or_else(|| format!("infeasible-{:016x}", c.seed));
            if c.is_feasible() {
                let src = c.source.clone().expect("feasible candidates have source");
                let embedding = gateway.embed(&src).ok();
                PoolRecord {
                    id,
                    kind: c.kind,
                    eval: results.next().expect("one result per feasible candidate"),
                    source: Some(src),
                    embedding,
                    failure: None,
                }
            } else {
                let message = c
                    .failure
                    .as_ref()
                    .map(|f| f.message.clone())
                    .unwrap_or_else(|| "infeasible".into());
                PoolRecord {
                    id,
                    kind: c.kind,
                    source: c.source.clone(),
                    eval: EvalResult::error(message.clone()),
                    embedding: None,
                    failure: Some(message),
                }
            }
        })
        .collect()
}

/// Record of a DSE run store (`dse.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum DseRecord {
    Header {
        schema: u32,
        config: DseConfig,
        pool: usize,
        baseline: f64,
        surrogate: bool,
    },
    Step(DseStep),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Dse(#[from] DseError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("baseline placement failed: {0}")]
    Baseline(String),
    #[error("pool has no candidate with source and embedding")]
    EmptyPool,
}

/// Design points for the pool members that have source and an embedding,
/// each paired with what is needed to evaluate it.
pub fn design_points(records: &[PoolRecord], digest: &[f64]) -> Vec<(DesignPoint, StrategyKind, String)> {
    records
        .iter()
        .filter_map(|r| {
            let src = r.source.clone()?;
            let emb = r.embedding.as_ref()?;
            let point = DesignPoint {
                id: r.id.clone(),
                embedding: emb.values.clone(),
                digest: digest.to_vec(),
                y: None,
            };
            Some((point, r.kind, src))
        })
        .collect()
}

/// Runs DSE over a generated pool, scoring each pick with the placer as
/// `hpwl / (hpwl + baseline)`. With `store`, the header and every step are
/// written to that JSONL file.
pub fn run_pool_dse(
    evaluator: &PlacementEvaluator,
    records: &[PoolRecord],
    digest: &[f64],
    cfg: &DseConfig,
    prior: Option<&dyn PriorMean>,
    store: Option<&Path>,
) -> Result<DseOutcome, HarnessError> {
    let baseline = evaluator
        .baseline()
        .success_hpwl()
        .ok_or_else(|| HarnessError::Baseline("base bundle did not place".into()))?;
    let entries = design_points(records, digest);
    if entries.is_empty() {
        return Err(HarnessError::EmptyPool);
    }
    let points: Vec<DesignPoint> = entries.iter().map(|e| e.0.clone()).collect();
    let outcome = run_dse(&points, cfg, prior, |p| {
        let (_, kind, src) = entries.iter().find(|e| e.0.id == p.id).expect("point from this pool");
        let r = evaluate_isolated(evaluator, *kind, src);
        match r.success_hpwl() {
            Some(h) => Ok(normalized_loss(h, baseline)),
            None => Err(r.message.unwrap_or_else(|| format!("{:?}", r.status))),
        }
    })?;
    if let Some(path) = store {
        let w = JsonlWriter::create(path)?;
        w.append(&DseRecord::Header {
            schema: SCHEMA_VERSION,
            config: cfg.clone(),
            pool: points.len(),
            baseline,
            surrogate: prior.is_some(),
        })?;
        for s in &outcome.steps {
            w.append(&DseRecord::Step(s.clone()))?;
        }
    }
    Ok(outcome)
}

/// Diversity-aware selection of `m` pool records (successful, embedded
/// ones only), in selection order.
pub fn select_records<'a>(
    records: &'a [PoolRecord],
    m: usize,
    k: usize,
    alpha: f64,
    beta: f64,
) -> Result<Vec<&'a PoolRecord>, SelectError> {
    let usable: Vec<&PoolRecord> = records
        .iter()
        .filter(|r| r.eval.is_success() && r.embedding.is_some())
        .collect();
    let pool = CandidatePool::from_results(
        usable
            .iter()
            .map(|r| (r.id.as_str(), &r.eval, r.embedding.as_ref().expect("filtered"))),
    );
    let picked = select_diverse(&pool, m, k.max(m), alpha, beta)?;
    Ok(picked
        .into_iter()
        .map(|i| {
            let id = &pool.members()[i].id;
            *usable.iter().find(|r| &r.id == id).expect("member from this pool")
        })
        .collect())
}
