use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::matcher::TermMatch;

/// A (head term, relation, page title) triple awaiting a verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub head: TermMatch,
    pub relation: String,
    /// The page's main title.
    pub tail: String,
    pub site_id: String,
    pub page_url: String,
    pub section_path: String,
    /// Child indices locating the head's section in the page's tree.
    pub section_index: Vec<usize>,
}

impl CandidatePair {
    /// Stable identity used to key the extraction journal: one candidate per
    /// (site, page, relation, head concept).
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.site_id, &self.page_url, &self.relation, &self.head.concept_id] {
            h.update(part.as_bytes());
            h.update([0x1f]);
        }
        hex::encode(&h.finalize()[..16])
    }
}
