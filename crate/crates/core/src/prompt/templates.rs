use std::collections::BTreeMap;
use std::path::Path;

use super::PromptError;

/// Section headers every template has, in this order.
pub const SECTION_HEADERS: [&str; 6] = [
    "Task description",
    "Context",
    "Algorithm code",
    "Related analysis",
    "Specific instructions",
    "Output format",
];

/// Language reference injected into prompts through the `grammar` slot.
pub const GRAMMAR: &str = include_str!("../../templates/grammar.md");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub text: String,
}

impl PromptTemplate {
    /// Checks the six `## ` sections appear in order.
    pub fn validate(&self) -> Result<(), PromptError> {
        let headers: Vec<&str> = self
            .text
            .lines()
            .filter_map(|l| l.strip_prefix("## "))
            .map(str::trim)
            .collect();
        if headers != SECTION_HEADERS {
            return Err(PromptError::BadTemplate {
                id: self.id.clone(),
                message: format!("sections are {headers:?}, expected {SECTION_HEADERS:?}"),
            });
        }
        Ok(())
    }

    /// Slot names in order of first appearance.
    pub fn slots(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(i) = rest.find("{{") {
            let after = &rest[i + 2..];
            let Some(j) = after.find("}}") else { break };
            let name = after[..j].trim().to_string();
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &after[j + 2..];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateId {
    Analysis,
    Idea,
    Reference,
    Candidate,
    EvolveE1,
    Reflect,
    EvolveE2,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::Analysis,
        TemplateId::Idea,
        TemplateId::Reference,
        TemplateId::Candidate,
        TemplateId::EvolveE1,
        TemplateId::Reflect,
        TemplateId::EvolveE2,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::Analysis => "analysis.md",
            TemplateId::Idea => "idea.md",
            TemplateId::Reference => "reference.md",
            TemplateId::Candidate => "candidate.md",
            TemplateId::EvolveE1 => "evolve_e1.md",
            TemplateId::Reflect => "reflect.md",
            TemplateId::EvolveE2 => "evolve_e2.md",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateId::Analysis => include_str!("../../templates/analysis.md"),
            TemplateId::Idea => include_str!("../../templates/idea.md"),
            TemplateId::Reference => include_str!("../../templates/reference.md"),
            TemplateId::Candidate => include_str!("../../templates/candidate.md"),
            TemplateId::EvolveE1 => include_str!("../../templates/evolve_e1.md"),
            TemplateId::Reflect => include_str!("../../templates/reflect.md"),
            TemplateId::EvolveE2 => include_str!("../../templates/evolve_e2.md"),
        }
    }
}

/// The seven templates used by generation and evolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| {
                (
                    id,
                    PromptTemplate {
                        id: id.file_name().trim_end_matches(".md").to_string(),
                        text: id.builtin().to_string(),
                    },
                )
            })
            .collect();
        Self { templates }
    }
}

impl TemplateSet {
    /// Built-in templates, with any same-named file in `dir` taking
    /// precedence.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| PromptError::BadTemplate {
                    id: path.display().to_string(),
                    message: e.to_string(),
                })?;
                let t = PromptTemplate {
                    id: id.file_name().trim_end_matches(".md").to_string(),
                    text,
                };
                t.validate()?;
                set.templates.insert(id, t);
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }
}
