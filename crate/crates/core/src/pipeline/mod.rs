//! Corpus-level extraction: candidate enumeration, the classification worker
//! pool with its checkpoint journal, triplet deduplication and reporting.

mod candidates;
mod extract;
mod journal;
mod report;
mod triplet;

pub use candidates::enumerate_candidates;
pub use extract::{run_extraction, DocumentIndex, ExtractionContext, ExtractionOutcome, MalformedRecord};
pub use journal::{read_journal, JournalEntry, JournalWriter};
pub use report::{format_cell, render_report, ExtractionReport, RelationCell, RenderedReport, SiteRow};
pub use triplet::{dedupe_triplets, triplet_key, DedupOutcome, RelationTriplet};
