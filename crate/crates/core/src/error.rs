use thiserror::Error;

use crate::tree::Span;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("spans {0} and {1} cross without nesting")]
    Overlap(Span, Span),
    #[error("span {0}: {1}")]
    Arity(Span, String),
    #[error("empty utterance")]
    Empty,
    #[error("bad span ({0}, {1})")]
    BadSpan(usize, usize),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("duplicate constant `{0}`")]
    DuplicateConstant(String),
    #[error("predicate `{0}` has no argument slots")]
    NullaryPredicate(String),
    #[error("subtype relation has a cycle through `{0}`")]
    CyclicSubtypes(String),
    #[error("unknown default argument `{0}`")]
    UnknownDefault(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("syntax error at byte {0}: {1}")]
    Syntax(usize, String),
    #[error("`{0}` takes {1} arguments, got {2}")]
    TooManyArgs(String, usize, usize),
    #[error("ill-typed argument {1} of `{0}`")]
    IllTyped(String, usize),
}

/// Raised when a span tree does not map to a program.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("composition failed at span {span}")]
pub struct CompositionFailure {
    pub span: Span,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("none of the candidate trees is semantically valid")]
    NoValidTree,
    #[error("no tree yields the gold program")]
    NoTreeFound,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("program is not saturated: {0}")]
    Unsaturated(String),
    #[error("cannot execute `{0}`")]
    Unsupported(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
}

#[derive(Debug, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// Errors surfaced by file IO and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{0}")]
    Data(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
