use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::candidate::CandidatePair;
use crate::document::collapse_whitespace;
use crate::llm::Judgment;
use crate::thesaurus::fold_case;

/// A positive verdict with its provenance; serialized flat, one per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTriplet {
    pub head_concept_id: String,
    pub head_surface: String,
    pub relation: String,
    pub tail_title: String,
    pub site_id: String,
    pub page_url: String,
    pub section_path: String,
    pub reason: String,
    pub model_id: String,
}

impl RelationTriplet {
    pub fn from_judgment(c: &CandidatePair, j: &Judgment) -> Self {
        RelationTriplet {
            head_concept_id: c.head.concept_id.clone(),
            head_surface: c.head.text.clone(),
            relation: c.relation.clone(),
            tail_title: c.tail.clone(),
            site_id: c.site_id.clone(),
            page_url: c.page_url.clone(),
            section_path: c.section_path.clone(),
            reason: j.reason.clone(),
            model_id: j.model_id.clone(),
        }
    }
}

/// `(concept, relation, case-folded whitespace-collapsed tail)`.
pub fn triplet_key(t: &RelationTriplet) -> (String, String, String) {
    (t.head_concept_id.clone(), t.relation.clone(), fold_case(&collapse_whitespace(&t.tail_title)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub triplets: Vec<RelationTriplet>,
    pub duplicates: usize,
}

/// Keep one triplet per key. The survivor comes from the site listed first
/// in `site_priority`; unlisted sites rank after listed ones, and ties go to
/// the earliest triplet. Output follows first occurrence of each key.
pub fn dedupe_triplets(triplets: &[RelationTriplet], site_priority: &[String]) -> DedupOutcome {
    let rank = |site: &str| site_priority.iter().position(|s| s == site).unwrap_or(usize::MAX);
    let mut slot: HashMap<(String, String, String), usize> = HashMap::new();
    let mut kept: Vec<RelationTriplet> = Vec::new();
    for t in triplets {
        match slot.get(&triplet_key(t)) {
            Some(&i) => {
                if rank(&t.site_id) < rank(&kept[i].site_id) {
                    kept[i] = t.clone();
                }
            }
            None => {
                slot.insert(triplet_key(t), kept.len());
                kept.push(t.clone());
            }
        }
    }
    DedupOutcome { duplicates: triplets.len() - kept.len(), triplets: kept }
}
