//! Regex rules compiled to deterministic automata, and the verifier
//! artifacts derived from them.
//!
//! A rule is a template of fixed literals and named variables. Compiling it
//! yields one minimal DFA per variable plus one for the whole template; the
//! artifact carries those automata and nothing else, so a verifier never
//! needs the regex source.

pub mod artifact;
pub mod ast;
pub mod dfa;
pub mod nfa;
pub mod rule;

pub use artifact::{ArtifactSegment, VerifierArtifact};
pub use ast::{parse_regex, ByteSet, RegexAst};
pub use dfa::{compile, compile_with_budget, Dfa, DfaRun, DEAD, DEFAULT_STATE_BUDGET};
pub use rule::{RegexRule, RuleTemplate, Segment, TemplateSegment, VariableValues};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VrmError {
    #[error("unsupported regex syntax at offset {offset}: {detail}")]
    UnsupportedSyntax { offset: usize, detail: String },
    #[error("regex parse error at offset {offset}: {detail}")]
    Parse { offset: usize, detail: String },
    #[error("automaton exceeds state budget of {budget}")]
    StateBlowup { budget: usize },
    #[error("input of {len} bytes exceeds limit of {max}")]
    InputTooLong { len: usize, max: usize },
    #[error("input does not match rule (failed at segment {segment})")]
    NoMatch { segment: usize },
    #[error("missing value for variable {0}")]
    MissingVariable(String),
    #[error("value given for unknown variable {0}")]
    UnknownVariable(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("unsupported artifact version {found}")]
    VersionMismatch { found: u32 },
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
}
