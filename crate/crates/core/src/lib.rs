//! Analytical global placement whose initialization, preconditioner and
//! optimizer policy are pluggable strategy programs, plus the machinery to
//! generate, select, evolve and search over those programs with a language
//! model (or a deterministic offline mock).

pub mod bookshelf;
pub mod cli;
pub mod config;
pub mod dse;
pub mod dsl;
pub mod evolve;
pub mod harness;
pub mod llm;
pub mod placer;
pub mod prompt;
pub mod select;
pub mod store;
pub mod util;
