//! Evidential relation-triplet extraction from semi-structured web articles.
//!
//! Pages are normalized into a heading tree ([`document`]), dictionary terms
//! are located with an Aho-Corasick automaton ([`matcher`]), each candidate
//! (term, relation, page title) gets a retrieved context ([`retrieval`]) and a
//! yes/no verdict with a reason from a chat model ([`llm`]). [`pipeline`]
//! drives this over a corpus; [`evaluation`] scores model verdicts against
//! gold labels.

pub mod candidate;
pub mod document;
pub mod error;
pub mod evaluation;
pub mod http;
pub mod llm;
pub mod matcher;
pub mod mock;
pub mod pipeline;
pub mod relation;
pub mod retrieval;
pub mod thesaurus;

pub use document::{
    flatten_section_text, preprocess_html, preprocess_html_bytes, section_path, ListMarkerStyle,
    Section, SiteProfile, WebDocument,
};
pub use error::*;
pub use matcher::{build_matcher, MatcherAutomaton, TermMatch};
pub use relation::{semantic_filter, RelationSet, RelationType};
pub use thesaurus::{load_thesaurus, TermEntry, Thesaurus};
pub use candidate::CandidatePair;
pub use http::EndpointSettings;
pub use llm::{classify, parse_judgment, Answer, ChatEndpoint, ChatSettings, ExemplarSet, Judgment, PromptBundle};
pub use retrieval::{
    build_query, chunk_for_candidate, cosine_similarity, retrieve_top_k, Chunk, EmbeddingEndpoint,
    EmbeddingSettings, EmbeddingVector, RetrievalConfig,
};
pub use evaluation::{
    agreement_matrix, cohen_kappa, confusion, effective_label, metrics, AgreementMatrix,
    BenchmarkSample, ConfusionMatrix, Label, LabelMode, Metrics,
};
pub use pipeline::{dedupe_triplets, enumerate_candidates, render_report, run_extraction, ExtractionReport, RelationTriplet};
