use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::journal::{read_journal, JournalEntry, JournalWriter};
use super::report::ExtractionReport;
use super::triplet::{dedupe_triplets, RelationTriplet};
use crate::candidate::CandidatePair;
use crate::document::{flatten_section_text, WebDocument};
use crate::error::PipelineError;
use crate::llm::{classify, Answer, ChatEndpoint, ExemplarSet, Judgment};
use crate::relation::RelationSet;
use crate::retrieval::{
    build_query, chunk_for_candidate, retrieve_top_k, word_index_at, Chunk, EmbeddingEndpoint,
    RetrievalConfig,
};

/// Documents by (site, page URL), plus page counts per site in first-seen
/// order.
#[derive(Debug, Default)]
pub struct DocumentIndex {
    docs: HashMap<(String, String), WebDocument>,
    pages: Vec<(String, usize)>,
}

impl DocumentIndex {
    pub fn new(docs: Vec<WebDocument>) -> Self {
        let mut index = DocumentIndex::default();
        for d in docs {
            match index.pages.iter_mut().find(|(s, _)| *s == d.site_id) {
                Some((_, n)) => *n += 1,
                None => index.pages.push((d.site_id.clone(), 1)),
            }
            index.docs.insert((d.site_id.clone(), d.page_url.clone()), d);
        }
        index
    }

    pub fn get(&self, site_id: &str, page_url: &str) -> Option<&WebDocument> {
        self.docs.get(&(site_id.to_string(), page_url.to_string()))
    }

    pub fn pages(&self) -> &[(String, usize)] {
        &self.pages
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Immutable inputs shared by every worker.
pub struct ExtractionContext {
    pub chat: ChatEndpoint,
    pub embed: EmbeddingEndpoint,
    pub exemplars: ExemplarSet,
    pub relations: RelationSet,
    pub retrieval: RetrievalConfig,
    pub concurrency: usize,
    pub site_priority: Vec<String>,
    /// Zero the latency field so journals are byte-reproducible.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRecord {
    pub key: String,
    pub site_id: String,
    pub page_url: String,
    pub relation: String,
    pub head_concept_id: String,
    pub head_surface: String,
    pub tail_title: String,
    pub model_id: String,
    pub raw_output: String,
}

#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub triplets: Vec<RelationTriplet>,
    pub duplicates: usize,
    pub report: ExtractionReport,
    pub malformed: Vec<MalformedRecord>,
    /// Candidates classified by this run (not taken from the journal).
    pub classified: usize,
    pub resumed: usize,
}

async fn retrieve(
    c: &CandidatePair,
    docs: &DocumentIndex,
    ctx: &ExtractionContext,
) -> Result<Vec<Chunk>, PipelineError> {
    let missing = || PipelineError::MissingSection { key: c.key(), page_url: c.page_url.clone() };
    let section = docs
        .get(&c.site_id, &c.page_url)
        .and_then(|d| d.section_at(&c.section_index))
        .ok_or_else(missing)?;
    let text = flatten_section_text(section);
    let word = word_index_at(&text, c.head.byte_span[0]).ok_or_else(missing)?;
    let chunks = chunk_for_candidate(&text, word, &ctx.retrieval)?;
    if chunks.len() == 1 {
        return Ok(chunks);
    }
    let query = build_query(&c.head.text, &ctx.relations, &c.relation, &c.tail)?;
    let mut inputs = Vec::with_capacity(chunks.len() + 1);
    inputs.push(query);
    inputs.extend(chunks.iter().map(|ch| ch.text.clone()));
    let mut vectors = ctx.embed.embed(&inputs).await?;
    let query = vectors.remove(0);
    let pairs: Vec<_> = chunks.into_iter().zip(vectors).collect();
    Ok(retrieve_top_k(&query, &pairs, &ctx.retrieval)?)
}

async fn judge(
    c: &CandidatePair,
    docs: &DocumentIndex,
    ctx: &ExtractionContext,
) -> Result<Judgment, PipelineError> {
    let retrieved = retrieve(c, docs, ctx).await?;
    let mut j = classify(c, &retrieved, &ctx.exemplars, &ctx.relations, &ctx.chat).await?;
    // A positive must carry its evidence.
    if j.answer == Answer::Yes && j.reason.trim().is_empty() {
        j.answer = Answer::Malformed;
    }
    if ctx.deterministic {
        j.latency_ms = 0;
    }
    Ok(j)
}

/// Classify every candidate not already in the journal at `journal_path`,
/// then assemble triplets, report and malformed records from the full
/// journal. Setting `stop` drains in-flight work and returns
/// [`PipelineError::Interrupted`]; any endpoint failure aborts the same way.
/// Either way the journal remains valid for a resumed run.
pub async fn run_extraction(
    candidates: &[CandidatePair],
    docs: &DocumentIndex,
    ctx: &ExtractionContext,
    journal_path: &Path,
    stop: &AtomicBool,
) -> Result<ExtractionOutcome, PipelineError> {
    let mut seen = HashSet::new();
    let candidates: Vec<(String, &CandidatePair)> = candidates
        .iter()
        .map(|c| (c.key(), c))
        .filter(|(k, _)| {
            let fresh = seen.insert(k.clone());
            if !fresh {
                log::warn!("duplicate candidate {k} ignored");
            }
            fresh
        })
        .collect();

    let mut done = read_journal(journal_path)?;
    let pending: Vec<_> = candidates.iter().filter(|(k, _)| !done.contains_key(k)).collect();
    let resumed = candidates.len() - pending.len();
    log::info!("{} candidates, {resumed} already journaled, {} to classify", candidates.len(), pending.len());

    let halt = AtomicBool::new(false);
    let (tx, writer) = JournalWriter::open(journal_path)?.spawn(ctx.concurrency.max(1) * 2);
    let results: Vec<Result<Option<(String, Judgment)>, PipelineError>> = stream::iter(pending)
        .map(|(key, c)| {
            let tx = tx.clone();
            let halt = &halt;
            async move {
                if stop.load(Ordering::SeqCst) || halt.load(Ordering::SeqCst) {
                    return Ok(None);
                }
                match judge(c, docs, ctx).await {
                    Ok(j) => {
                        let entry = JournalEntry { key: key.clone(), judgment: j.clone() };
                        if tx.send(entry).await.is_err() {
                            halt.store(true, Ordering::SeqCst);
                            return Err(PipelineError::Journal(std::io::Error::other("journal writer stopped")));
                        }
                        Ok(Some((key.clone(), j)))
                    }
                    Err(e) => {
                        halt.store(true, Ordering::SeqCst);
                        Err(e)
                    }
                }
            }
        })
        .buffer_unordered(ctx.concurrency.max(1))
        .collect()
        .await;
    drop(tx);
    let written = writer.await.map_err(std::io::Error::other)??;

    let mut first_error = None;
    let mut classified = 0;
    for r in results {
        match r {
            Ok(Some((k, j))) => {
                done.insert(k, j);
                classified += 1;
            }
            Ok(None) => {}
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    debug_assert_eq!(written, classified);
    if let Some(e) = first_error {
        return Err(e);
    }
    if classified + resumed < candidates.len() {
        return Err(PipelineError::Interrupted { completed: classified + resumed });
    }

    let mut report = ExtractionReport::new(ctx.relations.ids().map(String::from).collect());
    for (site, pages) in docs.pages() {
        report.set_pages(site, *pages);
    }
    let mut positives = Vec::new();
    let mut malformed = Vec::new();
    for (key, c) in &candidates {
        let j = &done[key];
        report.record(&c.site_id, &c.relation, j.answer);
        match j.answer {
            Answer::Yes => positives.push(RelationTriplet::from_judgment(c, j)),
            Answer::No => {}
            Answer::Malformed => malformed.push(MalformedRecord {
                key: key.clone(),
                site_id: c.site_id.clone(),
                page_url: c.page_url.clone(),
                relation: c.relation.clone(),
                head_concept_id: c.head.concept_id.clone(),
                head_surface: c.head.text.clone(),
                tail_title: c.tail.clone(),
                model_id: j.model_id.clone(),
                raw_output: j.raw_output.clone(),
            }),
        }
    }
    let dedup = dedupe_triplets(&positives, &ctx.site_priority);
    Ok(ExtractionOutcome {
        triplets: dedup.triplets,
        duplicates: dedup.duplicates,
        report,
        malformed,
        classified,
        resumed,
    })
}
