//! TOML run configuration and case loading.
//!
//! Every table is optional; missing keys take their defaults.
//!
//! ```toml
//! seed = 7
//! workers = 4
//! case = "cases/toy/toy.aux"
//!
//! [engine]
//! max_iters = 800
//!
//! [backend]
//! mode = "mock"
//!
//! [evolution]
//! m = 6
//! trials = 200
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bookshelf::{generate_synthetic, parse_case, BenchmarkCase, BookshelfError, SyntheticSpec};
use crate::dse::{DseConfig, NetConfig};
use crate::evolve::EvolutionConfig;
use crate::llm::BackendConfig;
use crate::placer::EngineConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Case(#[from] BookshelfError),
    #[error("unknown case `{0}`: expected a .aux file, a synthetic .toml spec, `two-cliques` or `random:<cells>`")]
    UnknownCase(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Candidates generated before selection.
    pub candidates: usize,
    /// Pre-filter size: only the `k` best by score are considered.
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            candidates: 24,
            k: 16,
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// See [`load_case`].
    pub case: Option<String>,
    /// Directory of prompt template overrides.
    pub templates: Option<PathBuf>,
    pub engine: EngineConfig,
    pub backend: BackendConfig,
    pub selection: SelectionConfig,
    pub evolution: EvolutionConfig,
    pub dse: DseConfig,
    pub surrogate: NetConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

/// Loads a case from a Bookshelf `.aux` file, a synthetic spec `.toml`
/// (generated with `seed`), or a built-in name: `two-cliques` or
/// `random:<cells>`.
pub fn load_case(spec: &str, seed: u64) -> Result<BenchmarkCase, ConfigError> {
    let lower = spec.to_ascii_lowercase();
    if lower == "two-cliques" || lower == "two_cliques" {
        return Ok(generate_synthetic(&SyntheticSpec::two_cliques(), seed)?);
    }
    if let Some(n) = lower.strip_prefix("random:") {
        let cells = n.parse().map_err(|_| ConfigError::UnknownCase(spec.into()))?;
        return Ok(generate_synthetic(&SyntheticSpec::random(cells), seed)?);
    }
    let path = Path::new(spec);
    match path.extension().and_then(|e| e.to_str()) {
        Some("aux") => Ok(parse_case(path)?),
        Some("toml") => Ok(generate_synthetic(&SyntheticSpec::from_file(path)?, seed)?),
        _ => Err(ConfigError::UnknownCase(spec.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn nested_tables_and_unknown_keys() {
        let c = Config::from_toml_str("seed = 3\n[engine]\nmax_iters = 50\n[evolution]\ntrials = 9\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.engine.max_iters, 50);
        assert_eq!(c.evolution.trials, 9);
        assert!(Config::from_toml_str("sede = 3").is_err());
    }

    #[test]
    fn builtin_cases() {
        assert_eq!(load_case("two-cliques", 0).unwrap().num_cells(), 22);
        assert!(load_case("random:30", 1).unwrap().num_cells() >= 30);
        assert!(matches!(load_case("nope.txt", 0), Err(ConfigError::UnknownCase(_))));
    }
}
