//! Aho-Corasick automaton over case-folded dictionary surfaces, and maximum
//! forward matching on word boundaries.
//!
//! The automaton is byte-oriented: patterns and text are folded to lowercase
//! UTF-8 and scanned once, left to right, following failure links instead of
//! backtracking. Every dictionary hit that starts and ends on a word boundary
//! is recorded against its start offset; a single sweep then keeps the longest
//! hit at each start and resumes after it.

use std::collections::{BTreeSet, VecDeque};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::ThesaurusError;
use crate::thesaurus::{TermEntry, Thesaurus};

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;

const CACHE_MAGIC: &[u8; 6] = b"RLXAC\0";
pub const CACHE_VERSION: u32 = 1;

/// One occurrence of a dictionary term in a text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    /// Dictionary surface (folded).
    pub surface: String,
    /// The text as it appears in the source.
    pub text: String,
    pub concept_id: String,
    pub semantic_types: BTreeSet<String>,
    /// `[start, end)` byte offsets into the source text.
    pub byte_span: [usize; 2],
    #[serde(default)]
    pub section_ref: String,
}

/// A hit reported by the raw scan, before boundary and longest-match rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawHit {
    pub pattern: usize,
    /// Byte offsets into the folded text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    edges: Vec<(u8, u32)>,
    fail: u32,
    /// Pattern ending exactly here.
    output: u32,
    /// Nearest node on the failure chain that has an output.
    dict: u32,
}

impl Node {
    fn new() -> Self {
        Node { edges: Vec::new(), fail: ROOT, output: NONE, dict: NONE }
    }

    fn edge(&self, b: u8) -> Option<u32> {
        self.edges
            .binary_search_by_key(&b, |&(k, _)| k)
            .ok()
            .map(|i| self.edges[i].1)
    }
}

/// Compiled, immutable matcher. `Send + Sync`; share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatcherAutomaton {
    nodes: Vec<Node>,
    root_next: Box<[u32; 256]>,
    patterns: Vec<TermEntry>,
}

pub fn build_matcher(thesaurus: &Thesaurus) -> Result<MatcherAutomaton, ThesaurusError> {
    MatcherAutomaton::from_entries(thesaurus.entries().to_vec())
}

impl MatcherAutomaton {
    pub fn from_entries(patterns: Vec<TermEntry>) -> Result<Self, ThesaurusError> {
        if patterns.iter().all(|p| p.surface.is_empty()) {
            return Err(ThesaurusError::EmptyDictionary);
        }
        let mut nodes = vec![Node::new()];
        for (pid, p) in patterns.iter().enumerate() {
            if p.surface.is_empty() {
                continue;
            }
            let mut cur = ROOT;
            for &b in p.surface.as_bytes() {
                cur = match nodes[cur as usize].edge(b) {
                    Some(next) => next,
                    None => {
                        let next = nodes.len() as u32;
                        nodes.push(Node::new());
                        let edges = &mut nodes[cur as usize].edges;
                        let at = edges.partition_point(|&(k, _)| k < b);
                        edges.insert(at, (b, next));
                        next
                    }
                };
            }
            if nodes[cur as usize].output == NONE {
                nodes[cur as usize].output = pid as u32;
            }
        }

        let mut root_next = Box::new([ROOT; 256]);
        let mut queue = VecDeque::new();
        for &(b, child) in &nodes[ROOT as usize].edges {
            root_next[b as usize] = child;
            queue.push_back(child);
        }
        while let Some(u) = queue.pop_front() {
            let edges = nodes[u as usize].edges.clone();
            for (b, v) in edges {
                let fail = if u == ROOT {
                    ROOT
                } else {
                    let mut f = nodes[u as usize].fail;
                    loop {
                        if f == ROOT {
                            break root_next[b as usize];
                        }
                        if let Some(w) = nodes[f as usize].edge(b) {
                            break w;
                        }
                        f = nodes[f as usize].fail;
                    }
                };
                let target = &nodes[fail as usize];
                let dict = if target.output != NONE { fail } else { target.dict };
                let node = &mut nodes[v as usize];
                node.fail = fail;
                node.dict = dict;
                queue.push_back(v);
            }
        }
        Ok(MatcherAutomaton { nodes, root_next, patterns })
    }

    pub fn patterns(&self) -> &[TermEntry] {
        &self.patterns
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    fn step(&self, mut state: u32, b: u8) -> u32 {
        loop {
            if state == ROOT {
                return self.root_next[b as usize];
            }
            let node = &self.nodes[state as usize];
            if let Some(next) = node.edge(b) {
                return next;
            }
            state = node.fail;
        }
    }

    /// Single left-to-right pass; `hit(end, pattern)` for every pattern that
    /// ends at byte offset `end`.
    fn scan(&self, bytes: &[u8], mut hit: impl FnMut(usize, usize)) {
        let mut state = ROOT;
        for (i, &b) in bytes.iter().enumerate() {
            state = self.step(state, b);
            let node = &self.nodes[state as usize];
            let mut out = if node.output != NONE { state } else { node.dict };
            while out != NONE {
                let n = &self.nodes[out as usize];
                hit(i + 1, n.output as usize);
                out = n.dict;
            }
        }
    }

    /// Every (possibly overlapping) occurrence of every surface in the folded
    /// text, ignoring word boundaries.
    pub fn find_overlapping(&self, text: &str) -> Vec<RawHit> {
        let folded = crate::thesaurus::fold_case(text);
        let mut hits = Vec::new();
        self.scan(folded.as_bytes(), |end, pattern| {
            let start = end - self.patterns[pattern].surface.len();
            hits.push(RawHit { pattern, start, end });
        });
        hits
    }

    /// Maximum forward matching: left to right, the longest dictionary
    /// surface that starts and ends on a word boundary, then resume after it.
    pub fn match_terms(&self, text: &str) -> Vec<TermMatch> {
        if text.is_empty() {
            return Vec::new();
        }
        let prepared = Prepared::new(text);
        let n = prepared.folded.len();
        // Longest boundary-valid hit per folded start offset.
        let mut best_end = vec![0u32; n];
        let mut best_pat = vec![NONE; n];
        self.scan(&prepared.folded, |end, pattern| {
            let start = end - self.patterns[pattern].surface.len();
            if (end as u32) > best_end[start] && prepared.valid_span(start, end) {
                best_end[start] = end as u32;
                best_pat[start] = pattern as u32;
            }
        });

        let mut out = Vec::new();
        let mut resume = 0usize;
        for start in 0..n {
            if start < resume || best_pat[start] == NONE {
                continue;
            }
            let end = best_end[start] as usize;
            let p = &self.patterns[best_pat[start] as usize];
            let (os, oe) = (prepared.to_orig[start], prepared.to_orig[end]);
            out.push(TermMatch {
                surface: p.surface.clone(),
                text: text[os..oe].to_string(),
                concept_id: p.concept_id.clone(),
                semantic_types: p.semantic_types.clone(),
                byte_span: [os, oe],
                section_ref: String::new(),
            });
            resume = end;
        }
        out
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<(), ThesaurusError> {
        let io = |e: std::io::Error| ThesaurusError::Cache(e.to_string());
        w.write_all(CACHE_MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION).map_err(io)?;
        w.write_u32::<LittleEndian>(self.patterns.len() as u32).map_err(io)?;
        for p in &self.patterns {
            write_str(&mut w, &p.surface).map_err(io)?;
            write_str(&mut w, &p.concept_id).map_err(io)?;
            w.write_u32::<LittleEndian>(p.semantic_types.len() as u32).map_err(io)?;
            for t in &p.semantic_types {
                write_str(&mut w, t).map_err(io)?;
            }
        }
        w.write_u32::<LittleEndian>(self.nodes.len() as u32).map_err(io)?;
        for node in &self.nodes {
            w.write_u32::<LittleEndian>(node.fail).map_err(io)?;
            w.write_u32::<LittleEndian>(node.output).map_err(io)?;
            w.write_u32::<LittleEndian>(node.dict).map_err(io)?;
            w.write_u32::<LittleEndian>(node.edges.len() as u32).map_err(io)?;
            for &(b, to) in &node.edges {
                w.write_u8(b).map_err(io)?;
                w.write_u32::<LittleEndian>(to).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self, ThesaurusError> {
        let io = |e: std::io::Error| ThesaurusError::Cache(e.to_string());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CACHE_MAGIC {
            return Err(ThesaurusError::Cache("not an automaton cache file".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != CACHE_VERSION {
            return Err(ThesaurusError::CacheVersion { found: version, expected: CACHE_VERSION });
        }
        let n_patterns = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut patterns = Vec::with_capacity(n_patterns.min(1 << 20));
        for _ in 0..n_patterns {
            let surface = read_str(&mut r).map_err(io)?;
            let concept_id = read_str(&mut r).map_err(io)?;
            let n_types = r.read_u32::<LittleEndian>().map_err(io)?;
            let mut semantic_types = BTreeSet::new();
            for _ in 0..n_types {
                semantic_types.insert(read_str(&mut r).map_err(io)?);
            }
            patterns.push(TermEntry { surface, concept_id, semantic_types });
        }
        let n_nodes = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 24));
        for _ in 0..n_nodes {
            let fail = r.read_u32::<LittleEndian>().map_err(io)?;
            let output = r.read_u32::<LittleEndian>().map_err(io)?;
            let dict = r.read_u32::<LittleEndian>().map_err(io)?;
            let n_edges = r.read_u32::<LittleEndian>().map_err(io)?;
            let mut edges = Vec::with_capacity(n_edges.min(256) as usize);
            for _ in 0..n_edges {
                let b = r.read_u8().map_err(io)?;
                let to = r.read_u32::<LittleEndian>().map_err(io)?;
                edges.push((b, to));
            }
            nodes.push(Node { edges, fail, output, dict });
        }
        let in_range = |x: u32| x == NONE || (x as usize) < n_nodes;
        let sane = !nodes.is_empty()
            && nodes.iter().all(|n| {
                (n.fail as usize) < n_nodes
                    && in_range(n.dict)
                    && (n.output == NONE || (n.output as usize) < n_patterns)
                    && n.edges.iter().all(|&(_, to)| (to as usize) < n_nodes)
            });
        if !sane {
            return Err(ThesaurusError::Cache("corrupt automaton".into()));
        }
        let mut root_next = Box::new([ROOT; 256]);
        for &(b, child) in &nodes[ROOT as usize].edges {
            root_next[b as usize] = child;
        }
        Ok(MatcherAutomaton { nodes, root_next, patterns })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(std::io::ErrorKind::UnexpectedEof.into());
    }
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Replace list-marker tokens (`||`, `|1|`, `|2|`, `|3|`) with spaces of the
/// same byte length so they act as word boundaries.
pub fn mask_list_markers(text: &str) -> String {
    let mut bytes = text.as_bytes().to_vec();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'|' {
            if bytes.get(i + 1) == Some(&b'|') {
                bytes[i..i + 2].fill(b' ');
                i += 2;
                continue;
            }
            if matches!(bytes.get(i + 1), Some(b'1'..=b'3')) && bytes.get(i + 2) == Some(&b'|') {
                bytes[i..i + 3].fill(b' ');
                i += 3;
                continue;
            }
        }
        i += 1;
    }
    // Only ASCII bytes were replaced with ASCII bytes.
    String::from_utf8(bytes).expect("masking preserves UTF-8")
}

/// Folded text plus the boundary information needed to validate spans.
struct Prepared {
    folded: Vec<u8>,
    /// Folded offset -> original offset; `usize::MAX` inside a multi-byte
    /// lowercase expansion.
    to_orig: Vec<usize>,
    left_ok: Vec<bool>,
    right_ok: Vec<bool>,
}

impl Prepared {
    fn new(text: &str) -> Self {
        let masked = mask_list_markers(text);
        let len = masked.len();
        let mut folded = Vec::with_capacity(len);
        let mut to_orig = Vec::with_capacity(len + 1);
        let mut left_ok = vec![false; len + 1];
        let mut right_ok = vec![false; len + 1];
        let mut prev_alnum = false;
        let mut buf = [0u8; 4];
        for (off, ch) in masked.char_indices() {
            let alnum = ch.is_alphanumeric();
            left_ok[off] = !prev_alnum;
            right_ok[off] = !alnum;
            prev_alnum = alnum;
            let mut first = true;
            for lc in ch.to_lowercase() {
                let enc = lc.encode_utf8(&mut buf);
                for _ in 0..enc.len() {
                    to_orig.push(if first { off } else { usize::MAX });
                    first = false;
                }
                folded.extend_from_slice(enc.as_bytes());
            }
        }
        left_ok[len] = !prev_alnum;
        right_ok[len] = true;
        to_orig.push(len);
        Prepared { folded, to_orig, left_ok, right_ok }
    }

    fn valid_span(&self, start: usize, end: usize) -> bool {
        let (os, oe) = (self.to_orig[start], self.to_orig[end]);
        os != usize::MAX && oe != usize::MAX && oe > os && self.left_ok[os] && self.right_ok[oe]
    }
}
