//! Term dictionary loaded from a three-column TSV:
//! `surface<TAB>concept_id<TAB>type;type;...`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ThesaurusError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermEntry {
    /// Case-folded surface form.
    pub surface: String,
    pub concept_id: String,
    pub semantic_types: BTreeSet<String>,
}

/// Counters from a load, for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub rows: usize,
    pub skipped_malformed: usize,
    pub skipped_empty: usize,
    pub skipped_short: usize,
    pub merged: usize,
    pub conflicts: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fail on the first row without exactly three columns instead of
    /// skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Thesaurus {
    entries: Vec<TermEntry>,
    index: HashMap<String, usize>,
    stats: LoadStats,
}

/// Simple per-character Unicode lowercase, shared by dictionary and text.
pub fn fold_case(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

/// Surfaces under three characters are admitted only when written fully in
/// uppercase (abbreviations such as "CT").
fn passes_length_rule(raw: &str) -> bool {
    if raw.chars().count() >= 3 {
        return true;
    }
    let mut letters = raw.chars().filter(|c| c.is_alphabetic()).peekable();
    letters.peek().is_some() && letters.all(char::is_uppercase)
}

impl Thesaurus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a term, merging with an existing entry for the same folded surface.
    /// Returns false when the entry was rejected or conflicted.
    pub fn insert(&mut self, surface: &str, concept_id: &str, types: BTreeSet<String>) -> bool {
        let folded = fold_case(surface.trim());
        if folded.is_empty() || concept_id.is_empty() || types.is_empty() {
            self.stats.skipped_empty += 1;
            return false;
        }
        match self.index.get(&folded) {
            Some(&i) => {
                let existing = &mut self.entries[i];
                if existing.concept_id != concept_id {
                    log::warn!(
                        "surface `{folded}` maps to {} and {concept_id}; keeping the first",
                        existing.concept_id
                    );
                    self.stats.conflicts += 1;
                    false
                } else {
                    existing.semantic_types.extend(types);
                    self.stats.merged += 1;
                    true
                }
            }
            None => {
                self.index.insert(folded.clone(), self.entries.len());
                self.entries.push(TermEntry {
                    surface: folded,
                    concept_id: concept_id.to_string(),
                    semantic_types: types,
                });
                true
            }
        }
    }

    pub fn from_reader<R: BufRead>(reader: R, opts: LoadOptions) -> Result<Self, ThesaurusError> {
        let mut t = Thesaurus::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| ThesaurusError::FileUnreadable {
                path: Default::default(),
                source: e,
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            t.stats.rows += 1;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                if opts.strict {
                    return Err(ThesaurusError::FormatError { line: line_no, found: cols.len() });
                }
                t.stats.skipped_malformed += 1;
                continue;
            }
            let surface = cols[0].trim();
            if !surface.is_empty() && !passes_length_rule(surface) {
                t.stats.skipped_short += 1;
                continue;
            }
            let types: BTreeSet<String> = cols[2]
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            t.insert(surface, cols[1].trim(), types);
        }
        Ok(t)
    }

    pub fn entries(&self) -> &[TermEntry] {
        &self.entries
    }

    pub fn get(&self, surface: &str) -> Option<&TermEntry> {
        self.index.get(&fold_case(surface)).map(|&i| &self.entries[i])
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn load_thesaurus(path: impl AsRef<Path>) -> Result<Thesaurus, ThesaurusError> {
    load_thesaurus_with(path, LoadOptions::default())
}

pub fn load_thesaurus_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<Thesaurus, ThesaurusError> {
    let path = path.as_ref();
    let unreadable = |source| ThesaurusError::FileUnreadable { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(unreadable)?;
    Thesaurus::from_reader(BufReader::new(file), opts).map_err(|e| match e {
        ThesaurusError::FileUnreadable { source, .. } => unreadable(source),
        other => other,
    })
}
