//! Chunking of section text around a matched term, embedding, and top-K
//! selection by cosine similarity.
//!
//! Sizes are counted in whitespace-delimited words. The anchor chunk (the one
//! holding the matched term) is at least `anchor_min_words` long and always
//! survives selection; the text before and after it is cut into overlapping
//! windows.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{EndpointError, RelationError, RetrievalError};
use crate::http::{EndpointSettings, JsonEndpoint};
use crate::relation::RelationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub anchor_min_words: usize,
    pub chunk_words: usize,
    pub overlap_words: usize,
    pub top_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { anchor_min_words: 512, chunk_words: 128, overlap_words: 32, top_k: 10 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: &str| Err(RetrievalError::InvalidConfig(m.to_string()));
        if self.chunk_words == 0 {
            return bad("chunk_words must be positive");
        }
        if self.overlap_words >= self.chunk_words {
            return bad("overlap_words must be smaller than chunk_words");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if self.anchor_min_words < self.chunk_words {
            return bad("anchor_min_words must be at least chunk_words");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    /// `[start, end)` word indices into the chunked text.
    pub word_span: [usize; 2],
    pub is_anchor: bool,
}

/// Byte ranges of the whitespace-delimited words of `text`.
pub fn word_offsets(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

/// Index of the word containing byte `offset`, or the first word after it.
pub fn word_index_at(text: &str, offset: usize) -> Option<usize> {
    word_offsets(text).iter().position(|&(_, end)| end > offset)
}

pub fn chunk_for_candidate(
    text: &str,
    match_word_index: usize,
    cfg: &RetrievalConfig,
) -> Result<Vec<Chunk>, RetrievalError> {
    cfg.validate()?;
    let words: Vec<&str> = text.split_whitespace().collect();
    let n = words.len();
    if match_word_index >= n {
        return Err(RetrievalError::MatchOutOfRange { index: match_word_index, words: n });
    }
    let make = |start: usize, end: usize, is_anchor: bool| Chunk {
        text: words[start..end].join(" "),
        word_span: [start, end],
        is_anchor,
    };
    if n <= cfg.anchor_min_words {
        return Ok(vec![make(0, n, true)]);
    }
    let len = cfg.anchor_min_words;
    let anchor_start = match_word_index.saturating_sub(len / 2).min(n - len);
    let anchor_end = anchor_start + len;

    let mut chunks = Vec::new();
    for (s, e) in windows(0, anchor_start, cfg) {
        chunks.push(make(s, e, false));
    }
    chunks.push(make(anchor_start, anchor_end, true));
    for (s, e) in windows(anchor_end, n, cfg) {
        chunks.push(make(s, e, false));
    }
    Ok(chunks)
}

/// Windows of `chunk_words` stepping `chunk_words - overlap_words` over
/// `[from, to)`; the last window is cut at `to`.
fn windows(from: usize, to: usize, cfg: &RetrievalConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if from >= to {
        return out;
    }
    let stride = cfg.chunk_words - cfg.overlap_words;
    let mut start = from;
    loop {
        let end = (start + cfg.chunk_words).min(to);
        out.push((start, end));
        if end == to {
            break;
        }
        start += stride;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|v| v * factor).collect())
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dimension() != b.dimension() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.dimension(),
            found: b.dimension(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Top `cfg.top_k` chunks by similarity to the query, best first, ties to the
/// earlier chunk. The anchor is always returned: if it misses the cut it
/// takes the place of the lowest-ranked selection. Zero vectors score 0.
pub fn retrieve_top_k(
    query: &EmbeddingVector,
    chunks: &[(Chunk, EmbeddingVector)],
    cfg: &RetrievalConfig,
) -> Result<Vec<Chunk>, RetrievalError> {
    let mut scored = Vec::with_capacity(chunks.len());
    for (i, (chunk, v)) in chunks.iter().enumerate() {
        let score = match cosine_similarity(query, v) {
            Ok(s) => s,
            Err(RetrievalError::ZeroVector) => 0.0,
            Err(e) => return Err(e),
        };
        scored.push((score, chunk.word_span[0], i));
    }
    let by_rank = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    };
    scored.sort_by(by_rank);
    let k = cfg.top_k.max(1).min(scored.len());
    let anchor_rank = scored.iter().position(|&(_, _, i)| chunks[i].0.is_anchor);
    let mut picked: Vec<_> = scored[..k].to_vec();
    if let Some(r) = anchor_rank {
        if r >= k {
            picked[k - 1] = scored[r];
            picked.sort_by(by_rank);
        }
    }
    Ok(picked.into_iter().map(|(_, _, i)| chunks[i].0.clone()).collect())
}

/// The yes/no question used both as retrieval query and in the prompt.
pub fn build_query(
    head: &str,
    relations: &RelationSet,
    relation_id: &str,
    tail: &str,
) -> Result<String, RelationError> {
    let relation = relations.get(relation_id)?;
    Ok(format!("Is {head} {} {tail}?", relation.phrase))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSettings {
    #[serde(flatten)]
    pub endpoint: EndpointSettings,
    pub batch_limit: usize,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings { endpoint: EndpointSettings::default(), batch_limit: 128 }
    }
}

/// Client for the `{"model", "input"}` → `{"data": [{"index", "embedding"}]}`
/// protocol.
#[derive(Debug, Clone)]
pub struct EmbeddingEndpoint {
    endpoint: JsonEndpoint,
    batch_limit: usize,
}

impl EmbeddingEndpoint {
    pub fn new(settings: EmbeddingSettings, api_key: Option<String>) -> Self {
        EmbeddingEndpoint {
            endpoint: JsonEndpoint::new(settings.endpoint, "embeddings", api_key),
            batch_limit: settings.batch_limit.max(1),
        }
    }

    pub fn request_count(&self) -> u64 {
        self.endpoint.request_count()
    }

    pub async fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        if texts.is_empty() {
            return Err(RetrievalError::EmptyInput);
        }
        let mut out: Vec<EmbeddingVector> = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_limit) {
            let body = json!({ "model": self.endpoint.settings().model, "input": batch });
            let reply = self.endpoint.post(&body).await?;
            let vectors = parse_embeddings(&reply.body, batch.len())?;
            for v in vectors {
                if let Some(first) = out.first() {
                    if first.dimension() != v.dimension() {
                        return Err(RetrievalError::DimensionMismatch {
                            expected: first.dimension(),
                            found: v.dimension(),
                        });
                    }
                }
                out.push(v);
            }
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

fn parse_embeddings(
    body: &serde_json::Value,
    expected: usize,
) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    let resp: EmbeddingResponse = serde_json::from_value(body.clone())
        .map_err(|e| EndpointError::Protocol(format!("embedding response: {e}")))?;
    let mut data = resp.data;
    data.sort_by_key(|d| d.index);
    let indices_ok = data.iter().enumerate().all(|(i, d)| d.index == i);
    if data.len() != expected || !indices_ok {
        return Err(EndpointError::Protocol(format!(
            "expected {expected} embeddings indexed 0..{expected}, got {}",
            data.len()
        ))
        .into());
    }
    data.into_iter().map(|d| EmbeddingVector::new(d.embedding)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn short_text_single_anchor() {
        let chunks = chunk_for_candidate(&text(100), 40, &RetrievalConfig::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].is_anchor);
        assert_eq!(chunks[0].word_span, [0, 100]);
        assert_eq!(chunks[0].text, text(100));
    }

    #[test]
    fn long_text_layout() {
        let chunks = chunk_for_candidate(&text(1000), 600, &RetrievalConfig::default()).unwrap();
        let spans: Vec<[usize; 2]> = chunks.iter().map(|c| c.word_span).collect();
        assert_eq!(
            spans,
            vec![[0, 128], [96, 224], [192, 320], [288, 344], [344, 856], [856, 984], [952, 1000]]
        );
        assert!(chunks[4].is_anchor);
        assert_eq!(chunks.iter().filter(|c| c.is_anchor).count(), 1);
    }

    #[test]
    fn match_at_start_shifts_anchor() {
        let chunks = chunk_for_candidate(&text(600), 0, &RetrievalConfig::default()).unwrap();
        let spans: Vec<[usize; 2]> = chunks.iter().map(|c| c.word_span).collect();
        assert_eq!(spans, vec![[0, 512], [512, 600]]);
        let chunks = chunk_for_candidate(&text(600), 599, &RetrievalConfig::default()).unwrap();
        assert_eq!(chunks.last().unwrap().word_span, [88, 600]);
    }

    #[test]
    fn out_of_range_match() {
        let err = chunk_for_candidate(&text(10), 10, &RetrievalConfig::default()).unwrap_err();
        assert!(matches!(err, RetrievalError::MatchOutOfRange { index: 10, words: 10 }));
        assert!(chunk_for_candidate("", 0, &RetrievalConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = RetrievalConfig { overlap_words: 128, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RetrievalConfig { top_k: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RetrievalConfig { anchor_min_words: 64, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn word_positions() {
        let t = "  ||CBC|| may\nshow";
        assert_eq!(word_offsets(t), vec![(2, 9), (10, 13), (14, 18)]);
        assert_eq!(word_index_at(t, 4), Some(0));
        assert_eq!(word_index_at(t, 9), Some(1));
        assert_eq!(word_index_at(t, 18), None);
    }

    #[test]
    fn cosine_values() {
        let a = v(&[0.3, -2.0, 5.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let s = cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])),
            Err(RetrievalError::ZeroVector)
        ));
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }

    fn chunk(start: usize, is_anchor: bool) -> Chunk {
        Chunk { text: format!("c{start}"), word_span: [start, start + 1], is_anchor }
    }

    #[test]
    fn fewer_chunks_than_k() {
        let q = v(&[1.0, 0.0]);
        let chunks = vec![
            (chunk(0, true), v(&[0.0, 1.0])),
            (chunk(1, false), v(&[1.0, 0.0])),
            (chunk(2, false), v(&[1.0, 1.0])),
        ];
        let got = retrieve_top_k(&q, &chunks, &RetrievalConfig::default()).unwrap();
        let starts: Vec<usize> = got.iter().map(|c| c.word_span[0]).collect();
        assert_eq!(starts, vec![1, 2, 0]);
    }

    #[test]
    fn equal_scores_prefer_earlier_chunk() {
        let q = v(&[1.0, 0.0]);
        let chunks = vec![
            (chunk(5, false), v(&[2.0, 0.0])),
            (chunk(3, true), v(&[1.0, 0.0])),
        ];
        let got = retrieve_top_k(&q, &chunks, &RetrievalConfig::default()).unwrap();
        assert_eq!(got[0].word_span[0], 3);
    }

    #[test]
    fn low_ranked_anchor_is_kept() {
        // Scores descend with index; the anchor sits at rank 12 of 15.
        let q = v(&[1.0, 0.0]);
        let chunks: Vec<(Chunk, EmbeddingVector)> = (0..15)
            .map(|i| {
                let angle = i as f64 * 0.1;
                (chunk(i, i == 11), v(&[angle.cos(), angle.sin()]))
            })
            .collect();
        let got = retrieve_top_k(&q, &chunks, &RetrievalConfig::default()).unwrap();
        let starts: Vec<usize> = got.iter().map(|c| c.word_span[0]).collect();
        assert_eq!(starts, vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 11]);
    }

    #[test]
    fn queries() {
        let rels = RelationSet::standard();
        assert_eq!(
            build_query("nausea", &rels, "manifestation", "Clostridioides difficile–Induced Diarrhea")
                .unwrap(),
            "Is nausea an informative manifestation of Clostridioides difficile–Induced Diarrhea?"
        );
        assert_eq!(
            build_query("CBC", &rels, "diagnosis", "Hemolytic-uremic syndrome").unwrap(),
            "Is CBC an informative diagnostic procedure for Hemolytic-uremic syndrome?"
        );
        assert!(matches!(
            build_query("x", &rels, "causes", "y"),
            Err(RelationError::UnknownRelationType(_))
        ));
    }

    #[test]
    fn embedding_response_parsing() {
        let body = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]});
        let got = parse_embeddings(&body, 2).unwrap();
        assert_eq!(got[0].values(), &[1.0, 0.0]);
        assert!(parse_embeddings(&body, 3).is_err());
        assert!(parse_embeddings(&json!({"data": "x"}), 1).is_err());
    }
}
