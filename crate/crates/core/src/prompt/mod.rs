//! Prompt templates, the four-step generation chain, evolution prompts and
//! code extraction.

mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use templates::{PromptTemplate, TemplateId, TemplateSet, GRAMMAR, SECTION_HEADERS};

use crate::dsl::{parse_strategy, StrategyKind, StrategyProgram};
use crate::llm::{request_hash, ChatMessage, ChatRequest, Gateway, MockTask};
use crate::placer::{EvalResult, EvalStatus};
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template slot `{0}` has no value")]
    MissingSlot(String),
    #[error("template `{id}` is malformed: {message}")]
    BadTemplate { id: String, message: String },
    #[error("no fenced code block in model output")]
    Extraction,
}

/// Slot values by name.
pub type Slots = std::collections::BTreeMap<String, String>;

/// Replaces every `{{name}}` in the template. Unknown names are an error;
/// unused slot values are ignored.
pub fn render_prompt(template: &PromptTemplate, slots: &Slots) -> Result<String, PromptError> {
    let text = &template.text;
    let mut out = String::with_capacity(text.len() * 2);
    let mut rest = text.as_str();
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| PromptError::BadTemplate {
            id: template.id.clone(),
            message: "unterminated `{{`".into(),
        })?;
        let name = after[..end].trim();
        let value = slots
            .get(name)
            .ok_or_else(|| PromptError::MissingSlot(name.to_string()))?;
        out.push_str(value.trim_end());
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Content of the last fenced block in `text`, without fences or language
/// tag and trimmed.
pub fn extract_code_block(text: &str) -> Result<String, PromptError> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(body), true) => {
                blocks.push(body.join("\n"));
                current = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    blocks
        .pop()
        .map(|b| b.trim().to_string())
        .ok_or(PromptError::Extraction)
}

/// Everything a generation prompt can draw on.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationContext {
    pub kind: StrategyKind,
    pub current_source: String,
    pub grammar: Option<String>,
    /// Digest of the placement inputs.
    pub features: String,
    pub analysis: Option<String>,
    pub idea: Option<String>,
    pub reference: Option<String>,
}

impl GenerationContext {
    /// Context seeded with the identity program of `kind` and the shipped
    /// grammar text.
    pub fn new(kind: StrategyKind, features: impl Into<String>) -> Self {
        Self {
            kind,
            current_source: kind.identity_source().to_string(),
            grammar: Some(GRAMMAR.to_string()),
            features: features.into(),
            analysis: None,
            idea: None,
            reference: None,
        }
    }

    pub fn slots(&self) -> Slots {
        let mut s = Slots::new();
        s.insert("kind".into(), self.kind.to_string());
        s.insert("outputs".into(), self.kind.outputs().join(", "));
        s.insert("code".into(), self.current_source.clone());
        s.insert("features".into(), self.features.clone());
        if let Some(g) = &self.grammar {
            s.insert("grammar".into(), g.clone());
        }
        let or = |v: &Option<String>, d: &str| v.clone().unwrap_or_else(|| d.to_string());
        s.insert("analysis".into(), or(&self.analysis, "No prior analysis."));
        s.insert("idea".into(), or(&self.idea, "No idea yet."));
        s.insert(
            "reference".into(),
            or(&self.reference, "# no reference implementation"),
        );
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    ExecFailure,
    Improved,
    Degraded,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::ExecFailure => "execution failure",
            Outcome::Improved => "improved",
            Outcome::Degraded => "degraded",
        })
    }
}

/// Relative margin a child must beat its parent by to count as improved.
pub const IMPROVEMENT_MARGIN: f64 = 1e-4;

/// Any non-success run is an execution failure; otherwise the child must
/// beat the parent by [`IMPROVEMENT_MARGIN`].
pub fn classify_outcome(parent_hpwl: f64, child: &EvalResult) -> Outcome {
    match child.success_hpwl() {
        None => Outcome::ExecFailure,
        Some(h) if h < parent_hpwl * (1.0 - IMPROVEMENT_MARGIN) => Outcome::Improved,
        Some(_) => Outcome::Degraded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionRecord {
    pub parent_id: String,
    pub child_id: String,
    pub outcome: Outcome,
    pub hpwl_parent: Option<f64>,
    pub hpwl_child: Option<f64>,
    pub text: String,
}

/// One model call inside a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceStep {
    pub step: String,
    pub template: String,
    pub request_hash: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Extraction,
    Validation,
    Gateway,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub kind: FailureKind,
    pub message: String,
}

/// A generated candidate with the full chain that produced it. Infeasible
/// candidates keep their provenance and a failure record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateAlgorithm {
    pub kind: StrategyKind,
    pub seed: u64,
    pub source: Option<String>,
    #[serde(skip)]
    pub program: Option<StrategyProgram>,
    pub failure: Option<CandidateFailure>,
    pub provenance: Vec<ProvenanceStep>,
}

impl CandidateAlgorithm {
    pub fn is_feasible(&self) -> bool {
        self.program.is_some()
    }

    fn fail(mut self, kind: FailureKind, message: impl Into<String>) -> Self {
        self.failure = Some(CandidateFailure {
            kind,
            message: message.into(),
        });
        self
    }
}

const SYSTEM_PROMPT: &str = "You design components of an analytical global placer as programs \
in a small strategy language. Follow the requested output format exactly.";

/// Sends one rendered prompt and appends the exchange to `provenance`.
fn call(
    gateway: &Gateway,
    template: &PromptTemplate,
    slots: &Slots,
    step: &str,
    seed: u64,
    temperature: f64,
    task: MockTask,
    provenance: &mut Vec<ProvenanceStep>,
) -> Result<String, CandidateFailure> {
    let prompt = render_prompt(template, slots).map_err(|e| CandidateFailure {
        kind: FailureKind::Prompt,
        message: e.to_string(),
    })?;
    let messages = vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(prompt)];
    let hash = request_hash(gateway.model_name(), &messages, temperature);
    let req = ChatRequest {
        messages,
        temperature,
        seed,
        task,
    };
    let reply = gateway.chat(&req).map_err(|e| CandidateFailure {
        kind: FailureKind::Gateway,
        message: e.to_string(),
    })?;
    provenance.push(ProvenanceStep {
        step: step.to_string(),
        template: template.id.clone(),
        request_hash: hash,
        response: reply.clone(),
    });
    Ok(reply)
}

/// Four chained calls: analysis, high-level idea, reference implementation,
/// final candidate. Each step's output fills a slot of the next prompt.
/// Never fails: model misbehaviour becomes an infeasible candidate.
pub fn cot_generate(
    gateway: &Gateway,
    templates: &TemplateSet,
    ctx: &GenerationContext,
    seed: u64,
) -> CandidateAlgorithm {
    let kind = ctx.kind;
    let temp = gateway.config().temperature;
    let mut cand = CandidateAlgorithm {
        kind,
        seed,
        source: None,
        program: None,
        failure: None,
        provenance: Vec::new(),
    };
    let mut ctx = ctx.clone();
    let mut prov = Vec::new();
    let step_seed = |label: &str| derive_seed(seed, label);

    let result = (|| {
        let analysis = call(
            gateway,
            templates.get(TemplateId::Analysis),
            &ctx.slots(),
            "analysis",
            step_seed("analysis"),
            temp,
            MockTask::Analysis { kind },
            &mut prov,
        )?;
        ctx.analysis = Some(analysis);
        let idea = call(
            gateway,
            templates.get(TemplateId::Idea),
            &ctx.slots(),
            "idea",
            step_seed("idea"),
            temp,
            MockTask::Idea { kind },
            &mut prov,
        )?;
        ctx.idea = Some(idea);
        let reference = call(
            gateway,
            templates.get(TemplateId::Reference),
            &ctx.slots(),
            "reference",
            step_seed("reference"),
            temp,
            MockTask::Reference { kind },
            &mut prov,
        )?;
        // A reference without code is not fatal; the last step can still
        // produce a program from the idea.
        ctx.reference = extract_code_block(&reference).ok();
        call(
            gateway,
            templates.get(TemplateId::Candidate),
            &ctx.slots(),
            "candidate",
            step_seed("candidate"),
            temp,
            MockTask::Candidate {
                kind,
                reference: ctx.reference.clone(),
            },
            &mut prov,
        )
    })();

    cand.provenance = prov;
    let reply = match result {
        Ok(r) => r,
        Err(f) => return cand.fail(f.kind, f.message),
    };
    let source = match extract_code_block(&reply) {
        Ok(s) => s,
        Err(e) => return cand.fail(FailureKind::Extraction, e.to_string()),
    };
    cand.source = Some(source.clone());
    match parse_strategy(&source, kind) {
        Ok(p) => {
            cand.program = Some(p);
            cand
        }
        Err(e) => cand.fail(FailureKind::Validation, e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvoStage {
    E1,
    Reflect,
    E2,
}

/// Inputs of the evolution prompts. `child`, `child_result` and
/// `reflection` are filled in as the stages progress.
#[derive(Debug, Clone)]
pub struct EvolutionInput<'a> {
    pub kind: StrategyKind,
    pub parent: &'a str,
    pub parent_hpwl: f64,
    pub best_hpwl: f64,
    pub features: &'a str,
    pub analysis: Option<&'a str>,
    pub child: Option<&'a str>,
    pub child_result: Option<&'a EvalResult>,
    pub reflection: Option<&'a str>,
}

impl EvolutionInput<'_> {
    pub fn outcome(&self) -> Option<Outcome> {
        self.child_result
            .map(|r| classify_outcome(self.parent_hpwl, r))
    }

    fn feedback(&self) -> Option<String> {
        let r = self.child_result?;
        Some(match r.status {
            EvalStatus::Success => {
                let h = r.hpwl.unwrap_or(f64::NAN);
                format!(
                    "Child HPWL {h:.6} vs parent {:.6} ({:+.3}%).",
                    self.parent_hpwl,
                    100.0 * (h - self.parent_hpwl) / self.parent_hpwl
                )
            }
            EvalStatus::Divergence => format!(
                "The placement diverged after {} iterations (HPWL blew up).",
                r.iterations
            ),
            EvalStatus::Error => format!(
                "The program raised an error: {}",
                r.message.as_deref().unwrap_or("unknown error")
            ),
        })
    }

    fn slots(&self) -> Slots {
        let mut s = Slots::new();
        s.insert("kind".into(), self.kind.to_string());
        s.insert("outputs".into(), self.kind.outputs().join(", "));
        s.insert("grammar".into(), GRAMMAR.to_string());
        s.insert("features".into(), self.features.to_string());
        s.insert("parent".into(), self.parent.to_string());
        s.insert("parent_hpwl".into(), format!("{:.6}", self.parent_hpwl));
        s.insert("best_hpwl".into(), format!("{:.6}", self.best_hpwl));
        s.insert(
            "analysis".into(),
            self.analysis.unwrap_or("No prior analysis.").to_string(),
        );
        if let Some(c) = self.child {
            s.insert("child".into(), c.to_string());
        }
        if let Some(o) = self.outcome() {
            s.insert("outcome".into(), o.to_string());
        }
        if let Some(f) = self.feedback() {
            s.insert("feedback".into(), f);
        }
        if let Some(r) = self.reflection {
            s.insert("reflection".into(), r.to_string());
        }
        s
    }
}

/// Messages for one evolution stage. Reflect needs the child and its
/// result; E2 additionally needs the reflection text.
pub fn build_evolution_prompt(
    templates: &TemplateSet,
    stage: EvoStage,
    input: &EvolutionInput<'_>,
) -> Result<Vec<ChatMessage>, PromptError> {
    let id = match stage {
        EvoStage::E1 => TemplateId::EvolveE1,
        EvoStage::Reflect => TemplateId::Reflect,
        EvoStage::E2 => TemplateId::EvolveE2,
    };
    let text = render_prompt(templates.get(id), &input.slots())?;
    Ok(vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(text)])
}
