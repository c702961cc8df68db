use std::collections::HashSet;

use crate::candidate::CandidatePair;
use crate::document::WebDocument;
use crate::matcher::MatcherAutomaton;
use crate::relation::RelationSet;

/// One candidate per (page, head concept, relation), anchored at the first
/// mention in document order. Sections are visited pre-order, relations in
/// configuration order.
pub fn enumerate_candidates(
    docs: &[WebDocument],
    matcher: &MatcherAutomaton,
    relations: &RelationSet,
) -> Vec<CandidatePair> {
    let mut out = Vec::new();
    for doc in docs {
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (index, section) in doc.walk_sections() {
            if section.text.is_empty() {
                continue;
            }
            let path = doc.path_for_index(&index).expect("index comes from walk_sections");
            for mut m in matcher.match_terms(&section.text) {
                m.section_ref = path.clone();
                for rel in relations.iter().filter(|r| r.admits(&m)) {
                    if !seen.insert((m.concept_id.clone(), rel.id.clone())) {
                        continue;
                    }
                    out.push(CandidatePair {
                        head: m.clone(),
                        relation: rel.id.clone(),
                        tail: doc.main_title.clone(),
                        site_id: doc.site_id.clone(),
                        page_url: doc.page_url.clone(),
                        section_path: path.clone(),
                        section_index: index.clone(),
                    });
                }
            }
        }
    }
    out
}
