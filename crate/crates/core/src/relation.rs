use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::RelationError;
use crate::matcher::TermMatch;

/// A relation the pipeline asks about, with the semantic types a head term
/// must carry to be considered for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub id: String,
    /// Completes "Is <head> ... <tail>?".
    pub phrase: String,
    pub allowed_semantic_types: BTreeSet<String>,
}

impl RelationType {
    pub fn new(id: &str, phrase: &str, types: &[&str]) -> Self {
        RelationType {
            id: id.to_string(),
            phrase: phrase.to_string(),
            allowed_semantic_types: types.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn admits(&self, m: &TermMatch) -> bool {
        m.semantic_types
            .iter()
            .any(|t| self.allowed_semantic_types.contains(t))
    }
}

/// Ordered, id-unique collection of relation types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RelationType>", into = "Vec<RelationType>")]
pub struct RelationSet(Vec<RelationType>);

impl RelationSet {
    pub fn new(relations: Vec<RelationType>) -> Result<Self, RelationError> {
        let mut seen = BTreeSet::new();
        for r in &relations {
            if !seen.insert(r.id.as_str()) {
                return Err(RelationError::Invalid(format!("duplicate relation id `{}`", r.id)));
            }
            if r.allowed_semantic_types.is_empty() {
                return Err(RelationError::Invalid(format!(
                    "relation `{}` has no allowed semantic types",
                    r.id
                )));
            }
        }
        Ok(RelationSet(relations))
    }

    /// The three shipped relations: manifestation, diagnosis, treatment.
    pub fn standard() -> Self {
        RelationSet(vec![
            RelationType::new(
                "manifestation",
                "an informative manifestation of",
                &["Sign, Symptom, or Finding"],
            ),
            RelationType::new(
                "diagnosis",
                "an informative diagnostic procedure for",
                &["Diagnostic Procedure", "Laboratory Procedure"],
            ),
            RelationType::new(
                "treatment",
                "an informative therapeutic procedure or drug for",
                &["Therapeutic or Preventive Procedure", "Chemical or Drug"],
            ),
        ])
    }

    pub fn get(&self, id: &str) -> Result<&RelationType, RelationError> {
        self.0
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| RelationError::UnknownRelationType(id.to_string()))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RelationType> {
        self.0.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|r| r.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for RelationSet {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<RelationType>> for RelationSet {
    type Error = RelationError;

    fn try_from(v: Vec<RelationType>) -> Result<Self, Self::Error> {
        RelationSet::new(v)
    }
}

impl From<RelationSet> for Vec<RelationType> {
    fn from(s: RelationSet) -> Self {
        s.0
    }
}

/// Keep the matches whose semantic types intersect the relation's allowed set.
pub fn semantic_filter(
    matches: &[TermMatch],
    relations: &RelationSet,
    relation_id: &str,
) -> Result<Vec<TermMatch>, RelationError> {
    let relation = relations.get(relation_id)?;
    Ok(matches.iter().filter(|m| relation.admits(m)).cloned().collect())
}
