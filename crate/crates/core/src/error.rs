use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("document has no extractable main title")]
    EmptyDocument,
    #[error("input is not HTML: {0}")]
    ParseFailure(String),
    #[error("section is not part of this document")]
    SectionNotInDocument,
    #[error("invalid selector {0}")]
    InvalidSelector(String),
}

#[derive(Debug, Error)]
pub enum ThesaurusError {
    #[error("cannot read thesaurus {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 3 tab-separated columns, found {found}")]
    FormatError { line: usize, found: usize },
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("automaton cache: {0}")]
    Cache(String),
    #[error("automaton cache version {found} does not match expected {expected}")]
    CacheVersion { found: u32, expected: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelationError {
    #[error("unknown relation type `{0}`")]
    UnknownRelationType(String),
    #[error("invalid relation configuration: {0}")]
    Invalid(String),
}

/// Failure talking to a remote model endpoint.
#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("endpoint unavailable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("endpoint rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("unexpected endpoint response: {0}")]
    Protocol(String),
}

impl EndpointError {
    pub fn is_unavailable(&self) -> bool {
        matches!(self, EndpointError::Unavailable { .. })
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("match word index {index} out of range for {words} words")]
    MatchOutOfRange { index: usize, words: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding contains a non-finite component")]
    NonFinite,
    #[error("nothing to embed")]
    EmptyInput,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no retrieved context for prompt")]
    EmptyContext,
    #[error("exemplar set: {0}")]
    Exemplars(String),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error("candidate {key} refers to a section missing from {page_url}")]
    MissingSection { key: String, page_url: String },
    #[error("journal: {0}")]
    Journal(#[from] std::io::Error),
    #[error("interrupted; {completed} candidates journaled")]
    Interrupted { completed: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("agreement mode needs a reference label")]
    MissingReference,
    #[error("sample {0} has no prediction for the requested model")]
    MissingPrediction(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no labels to compare")]
    NoLabels,
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("benchmark line {line}: {message}")]
    Benchmark { line: usize, message: String },
}
