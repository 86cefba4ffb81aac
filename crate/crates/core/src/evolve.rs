//! UCB-driven evolution of a strategy population.
//!
//! Each trial picks the member with the highest upper confidence bound,
//! asks the model for an evolved child, reflects on how the child did,
//! asks for a refined child, evaluates it and offers it to the population.
//! The population keeps the `m` best distinct programs by HPWL.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::StrategyKind;
use crate::harness::{evaluate_isolated, Evaluator};
use crate::llm::{ChatMessage, ChatRequest, Gateway, MockTask};
use crate::placer::EvalResult;
use crate::prompt::{
    build_evolution_prompt, classify_outcome, extract_code_block, EvoStage, EvolutionInput,
    ProvenanceStep, ReflectionRecord, TemplateSet,
};
use crate::store::{read_jsonl, write_json_atomic, JsonlWriter, StoreError, SCHEMA_VERSION};
use crate::util::{derive_seed, short_hash};

/// Bandit statistics of one member: mean reward of its children and the
/// number of trials it was chosen for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct UcbStats {
    pub q: f64,
    pub n: u64,
}

impl UcbStats {
    pub fn record(&mut self, reward: f64) {
        self.n += 1;
        self.q += (reward - self.q) / self.n as f64;
    }
}

/// `q + lambda * sqrt(ln t / n)`; unvisited members score `+inf`.
pub fn ucb_score(stats: &UcbStats, t: u64, lambda: f64) -> f64 {
    if stats.n == 0 {
        return f64::INFINITY;
    }
    let t = t.max(1) as f64;
    stats.q + lambda * (t.ln() / stats.n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMember {
    pub id: String,
    pub kind: StrategyKind,
    pub source: String,
    pub eval: EvalResult,
    pub ucb: UcbStats,
    pub parent: Option<String>,
    pub generation: usize,
}

impl PopulationMember {
    /// A member from an evaluated program; the id is the program hash.
    pub fn new(kind: StrategyKind, source: String, eval: EvalResult) -> Self {
        Self {
            id: short_hash(&source),
            kind,
            source,
            eval,
            ucb: UcbStats::default(),
            parent: None,
            generation: 0,
        }
    }

    pub fn hpwl(&self) -> f64 {
        self.eval.hpwl.unwrap_or(f64::INFINITY)
    }
}

/// Frozen normalization for rewards, taken from the initial population so
/// rewards stay stationary over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScale {
    pub hpwl_min: f64,
    pub hpwl_max: f64,
}

impl RewardScale {
    /// Range of the members' HPWL. A zero-width range is widened to +-5%
    /// around its value so rewards still separate better from worse.
    pub fn from_members(members: &[PopulationMember]) -> Self {
        let lo = members.iter().map(|m| m.hpwl()).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|m| m.hpwl()).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-9 * hi.abs() {
            Self {
                hpwl_min: lo,
                hpwl_max: hi,
            }
        } else {
            Self {
                hpwl_min: 0.95 * lo,
                hpwl_max: 1.05 * hi,
            }
        }
    }

    /// Normalized score in `[0, 1]`; failed runs score 0.
    pub fn reward(&self, eval: &EvalResult) -> f64 {
        match eval.success_hpwl() {
            Some(h) => ((self.hpwl_max - h) / (self.hpwl_max - self.hpwl_min + 1e-12)).clamp(0.0, 1.0),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Population size.
    pub m: usize,
    /// Trial budget.
    pub trials: usize,
    /// Exploration weight of the UCB bonus.
    pub lambda: f64,
    /// Parallel evolve chains per trial.
    pub fanout: usize,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            m: 6,
            trials: 200,
            lambda: 1.0,
            fanout: 1,
            seed: 0,
        }
    }
}

/// State of an evolution run. `population` is sorted by ascending HPWL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRun {
    pub kind: StrategyKind,
    pub population: Vec<PopulationMember>,
    pub scale: RewardScale,
    pub t: usize,
    pub config: EvolutionConfig,
    /// HPWL of the base bundle, for reporting.
    #[serde(default)]
    pub baseline: Option<f64>,
}

impl EvolutionRun {
    /// Sorts and trims the initial members to `config.m`, dropping failed
    /// and duplicate programs.
    pub fn new(
        kind: StrategyKind,
        initial: Vec<PopulationMember>,
        config: EvolutionConfig,
    ) -> Result<Self, EvolveError> {
        let mut pop: Vec<PopulationMember> = Vec::new();
        for m in initial {
            if m.eval.is_success() && !pop.iter().any(|p| p.id == m.id) {
                pop.push(m);
            }
        }
        sort_population(&mut pop);
        if pop.len() < config.m {
            return Err(EvolveError::SmallPopulation {
                have: pop.len(),
                need: config.m,
            });
        }
        pop.truncate(config.m);
        Ok(Self {
            kind,
            scale: RewardScale::from_members(&pop),
            population: pop,
            t: 0,
            config,
            baseline: None,
        })
    }

    pub fn with_baseline(mut self, hpwl: f64) -> Self {
        self.baseline = Some(hpwl);
        self
    }

    pub fn best(&self) -> &PopulationMember {
        &self.population[0]
    }
}

fn sort_population(pop: &mut [PopulationMember]) {
    pop.sort_by(|a, b| a.hpwl().total_cmp(&b.hpwl()).then_with(|| a.id.cmp(&b.id)));
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("initial population has {have} successful members, {need} needed")]
    SmallPopulation { have: usize, need: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("run store does not match this run: {0}")]
    Mismatch(String),
}

/// Index of the member to evolve: highest UCB, then higher score, then
/// lower id.
pub fn choose_candidate(run: &EvolutionRun) -> usize {
    let t = run.t as u64 + 1;
    let key = |m: &PopulationMember| (ucb_score(&m.ucb, t, run.config.lambda), run.scale.reward(&m.eval));
    (0..run.population.len())
        .min_by(|&a, &b| {
            let (pa, pb) = (&run.population[a], &run.population[b]);
            let (ua, fa) = key(pa);
            let (ub, fb) = key(pb);
            ub.total_cmp(&ua)
                .then(fb.total_cmp(&fa))
                .then_with(|| pa.id.cmp(&pb.id))
        })
        .expect("population is not empty")
}

/// Inserts a successful child, re-sorts and drops the worst member. Failed
/// children and programs already present leave the population unchanged.
pub fn update_population(run: &mut EvolutionRun, child: &PopulationMember) {
    if !child.eval.is_success() || run.population.iter().any(|p| p.id == child.id) {
        return;
    }
    run.population.push(child.clone());
    sort_population(&mut run.population);
    run.population.truncate(run.config.m);
}

/// Everything one evolve chain produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    /// First child, or the raw reply if no code could be extracted.
    pub first_source: String,
    pub first_eval: EvalResult,
    pub reflection: ReflectionRecord,
    /// The refined child that is offered to the population.
    pub child: PopulationMember,
    pub reward: f64,
    pub provenance: Vec<ProvenanceStep>,
}

/// One trial of the run; replaying these onto the initial population
/// reconstructs the run state exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub parent_id: String,
    pub parent_ucb: UcbStats,
    pub chains: Vec<ChainRecord>,
    pub best_id: String,
    pub best_hpwl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum HistoryRecord {
    Header {
        schema: u32,
        kind: StrategyKind,
        config: EvolutionConfig,
        scale: RewardScale,
        #[serde(default)]
        baseline: Option<f64>,
        initial: Vec<PopulationMember>,
    },
    Trial(TrialRecord),
}

fn chat_step(
    gateway: &Gateway,
    messages: Vec<ChatMessage>,
    temperature: f64,
    seed: u64,
    task: MockTask,
    step: &str,
    template: &str,
    provenance: &mut Vec<ProvenanceStep>,
) -> String {
    let hash = crate::llm::request_hash(gateway.model_name(), &messages, temperature);
    let req = ChatRequest {
        messages,
        temperature,
        seed,
        task,
    };
    // A gateway failure is recorded as the reply text; extraction then
    // fails and the child counts as an execution failure.
    let reply = gateway
        .chat(&req)
        .unwrap_or_else(|e| format!("gateway error: {e}"));
    provenance.push(ProvenanceStep {
        step: step.into(),
        template: template.into(),
        request_hash: hash,
        response: reply.clone(),
    });
    reply
}

fn evaluate_reply(evaluator: &dyn Evaluator, kind: StrategyKind, reply: &str) -> (String, EvalResult) {
    match extract_code_block(reply) {
        Ok(src) => {
            let eval = evaluate_isolated(evaluator, kind, &src);
            (src, eval)
        }
        Err(e) => (reply.to_string(), EvalResult::error(e.to_string())),
    }
}

/// Context shared by the chains of a run.
pub struct EvolveEnv<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub evaluator: &'a dyn Evaluator,
    /// Placement-input digest used in prompts.
    pub features: &'a str,
}

/// One evolve chain for `parent`: first evolution prompt, evaluation,
/// reflection, refinement prompt, evaluation. Does not touch the run.
pub fn evolve_chain(
    env: &EvolveEnv<'_>,
    run: &EvolutionRun,
    parent: &PopulationMember,
    seed: u64,
) -> ChainRecord {
    let kind = run.kind;
    let cfg = env.gateway.config();
    let best_hpwl = run.best().hpwl();
    let mut prov = Vec::new();
    let mut input = EvolutionInput {
        kind,
        parent: &parent.source,
        parent_hpwl: parent.hpwl(),
        best_hpwl,
        features: env.features,
        analysis: None,
        child: None,
        child_result: None,
        reflection: None,
    };

    let messages = build_evolution_prompt(env.templates, EvoStage::E1, &input)
        .expect("evolution templates are complete");
    let reply = chat_step(
        env.gateway,
        messages,
        cfg.temperature,
        derive_seed(seed, "e1"),
        MockTask::Evolve {
            kind,
            parent: parent.source.clone(),
        },
        "evolve",
        "evolve_e1",
        &mut prov,
    );
    let (first_source, first_eval) = evaluate_reply(env.evaluator, kind, &reply);
    let outcome = classify_outcome(parent.hpwl(), &first_eval);

    input.child = Some(&first_source);
    input.child_result = Some(&first_eval);
    let messages = build_evolution_prompt(env.templates, EvoStage::Reflect, &input)
        .expect("evolution templates are complete");
    let reflection_text = chat_step(
        env.gateway,
        messages,
        cfg.reflection_temperature,
        derive_seed(seed, "reflect"),
        MockTask::Reflect { kind, outcome },
        "reflect",
        "reflect",
        &mut prov,
    );

    input.reflection = Some(&reflection_text);
    let messages = build_evolution_prompt(env.templates, EvoStage::E2, &input)
        .expect("evolution templates are complete");
    let reply = chat_step(
        env.gateway,
        messages,
        cfg.temperature,
        derive_seed(seed, "e2"),
        MockTask::Refine {
            kind,
            parent: parent.source.clone(),
            child: first_source.clone(),
            outcome,
        },
        "refine",
        "evolve_e2",
        &mut prov,
    );
    let (source, eval) = evaluate_reply(env.evaluator, kind, &reply);
    let first_id = short_hash(&first_source);
    let mut child = PopulationMember::new(kind, source, eval);
    child.parent = Some(parent.id.clone());
    child.generation = parent.generation + 1;
    let reward = run.scale.reward(&child.eval);

    ChainRecord {
        reflection: ReflectionRecord {
            parent_id: parent.id.clone(),
            child_id: first_id,
            outcome,
            hpwl_parent: parent.eval.hpwl,
            hpwl_child: first_eval.success_hpwl(),
            text: reflection_text.clone(),
        },
        first_source,
        first_eval,
        child,
        reward,
        provenance: prov,
    }
}

/// Applies a trial's outcome: updates the parent's statistics with every
/// chain's reward and offers every child to the population.
pub fn apply_trial(run: &mut EvolutionRun, record: &TrialRecord) {
    for c in &record.chains {
        if let Some(p) = run.population.iter_mut().find(|p| p.id == record.parent_id) {
            p.ucb.record(c.reward);
        }
    }
    for c in &record.chains {
        update_population(run, &c.child);
    }
    run.t += 1;
}

/// Runs one trial: choose, evolve (`fanout` chains in parallel), update.
pub fn evolve_step(env: &EvolveEnv<'_>, run: &mut EvolutionRun) -> TrialRecord {
    let idx = choose_candidate(run);
    let parent = run.population[idx].clone();
    let trial = run.t;
    let chains: Vec<ChainRecord> = (0..run.config.fanout.max(1))
        .into_par_iter()
        .map(|c| {
            let seed = derive_seed(run.config.seed, &format!("trial/{trial}/chain/{c}"));
            evolve_chain(env, run, &parent, seed)
        })
        .collect();
    let mut record = TrialRecord {
        trial,
        parent_id: parent.id.clone(),
        parent_ucb: parent.ucb,
        chains,
        best_id: String::new(),
        best_hpwl: f64::NAN,
    };
    apply_trial(run, &record);
    if let Some(p) = run.population.iter().find(|p| p.id == parent.id) {
        record.parent_ucb = p.ucb;
    }
    record.best_id = run.best().id.clone();
    record.best_hpwl = run.best().hpwl();
    record
}

/// Files of a resumable run directory.
pub struct RunDir {
    pub dir: PathBuf,
}

impl RunDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn history(&self) -> PathBuf {
        self.dir.join("history.jsonl")
    }

    pub fn population(&self) -> PathBuf {
        self.dir.join("population.json")
    }

    /// Wall-clock side log; not part of the deterministic history.
    pub fn timings(&self) -> PathBuf {
        self.dir.join("timings.jsonl")
    }
}

/// Runtime of one evaluation, kept apart from the history so the history
/// stays bit-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    pub runtime_s: f64,
    /// Milliseconds since the Unix epoch when the record was written.
    pub unix_ms: u128,
}

impl TimingRecord {
    pub fn now(id: &str, trial: Option<usize>, runtime_s: f64) -> Self {
        let unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_millis());
        Self {
            id: id.to_string(),
            trial,
            runtime_s,
            unix_ms,
        }
    }
}

/// Result of [`run_evolution`].
#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub run: EvolutionRun,
    pub history: Vec<TrialRecord>,
}

impl EvolutionOutcome {
    pub fn best(&self) -> &PopulationMember {
        self.run.best()
    }
}

/// Runs trials until `run.config.trials` are done. With a run directory,
/// every trial is appended to `history.jsonl` and an existing history is
/// replayed first, so an interrupted run continues where it stopped.
pub fn run_evolution(
    env: &EvolveEnv<'_>,
    mut run: EvolutionRun,
    dir: Option<&Path>,
) -> Result<EvolutionOutcome, EvolveError> {
    let mut history = Vec::new();
    let writer = match dir {
        None => None,
        Some(d) => {
            let rd = RunDir::new(d);
            let records: Vec<HistoryRecord> = read_jsonl(&rd.history())?;
            let writer = JsonlWriter::open(&rd.history())?;
            let header = HistoryRecord::Header {
                schema: SCHEMA_VERSION,
                kind: run.kind,
                config: run.config.clone(),
                scale: run.scale,
                baseline: run.baseline,
                initial: run.population.clone(),
            };
            let mut it = records.into_iter();
            match it.next() {
                None => writer.append(&header)?,
                Some(HistoryRecord::Header {
                    schema,
                    kind,
                    config,
                    scale,
                    baseline,
                    initial,
                }) => {
                    // The budget may be extended on resume; nothing else.
                    let same = schema == SCHEMA_VERSION
                        && kind == run.kind
                        && initial == run.population
                        && scale == run.scale
                        && baseline.map(f64::to_bits) == run.baseline.map(f64::to_bits)
                        && EvolutionConfig {
                            trials: run.config.trials,
                            ..config
                        } == run.config;
                    if !same {
                        return Err(EvolveError::Mismatch(
                            "header differs from the requested run".into(),
                        ));
                    }
                }
                Some(HistoryRecord::Trial(_)) => {
                    return Err(EvolveError::Mismatch("history has no header".into()))
                }
            }
            for r in it {
                match r {
                    HistoryRecord::Trial(t) if t.trial == run.t => {
                        apply_trial(&mut run, &t);
                        history.push(t);
                    }
                    _ => return Err(EvolveError::Mismatch(format!("unexpected record at trial {}", run.t))),
                }
            }
            let timings = JsonlWriter::open(&rd.timings())?;
            Some((writer, timings, rd))
        }
    };
    while run.t < run.config.trials {
        let record = evolve_step(env, &mut run);
        if let Some((w, timings, rd)) = &writer {
            w.append(&HistoryRecord::Trial(record.clone()))?;
            write_json_atomic(&rd.population(), &run.population)?;
            for c in &record.chains {
                timings.append(&TimingRecord::now(&c.child.id, Some(record.trial), c.child.eval.runtime_s))?;
            }
        }
        history.push(record);
    }
    Ok(EvolutionOutcome { run, history })
}
