//! Prompt assembly: preamble, three worked exemplars, then the retrieved
//! context and the question.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidate::CandidatePair;
use crate::error::PromptError;
use crate::relation::RelationSet;
use crate::retrieval::{build_query, Chunk};

pub const EXEMPLAR_FORMAT_VERSION: u32 = 1;
pub const EXEMPLARS_PER_RELATION: usize = 3;

const BUILTIN_EXEMPLARS: &str = include_str!("../../assets/exemplars.json");

pub const SYSTEM_PREAMBLE: &str = "\
You decide whether a biomedical relation holds, using text taken from a web page.
The context was extracted from a single page whose main title is the tail entity of the question. \
The whole page describes that main title, even in passages where the title itself never appears.
The context keeps the page layout: each passage starts with its section path in brackets, and list \
items are wrapped in markers such as ||item|| or |1|item|1|.
Before deciding, first consider what the matched term means on its own and what it refers to in this context.
Reply with exactly one JSON object and nothing else. It must have two keys: \"answer\", whose value is \
either \"Yes\" or \"No\", and \"reason\", a short explanation grounded in the context.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub title: String,
    pub section_path: String,
    pub context: String,
    pub term: String,
    pub question: String,
    pub answer: String,
    pub reason: String,
}

impl Exemplar {
    fn user_turn(&self) -> String {
        user_message(&self.title, &self.term, &format!("[{}]\n{}", self.section_path, self.context), &self.question)
    }

    fn answer_json(&self) -> String {
        answer_json(&self.answer, &self.reason)
    }
}

/// Canonical `{"answer": ..., "reason": ...}` text.
pub fn answer_json(answer: &str, reason: &str) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        answer: &'a str,
        reason: &'a str,
    }
    serde_json::to_string(&Out { answer, reason }).expect("string fields serialize")
}

/// Versioned exemplar file: three worked examples per relation id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub version: u32,
    pub relations: BTreeMap<String, Vec<Exemplar>>,
}

impl ExemplarSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_EXEMPLARS).expect("shipped exemplars are valid")
    }

    pub fn from_json(s: &str) -> Result<Self, PromptError> {
        let set: ExemplarSet =
            serde_json::from_str(s).map_err(|e| PromptError::Exemplars(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Exemplars(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    fn validate(&self) -> Result<(), PromptError> {
        if self.version != EXEMPLAR_FORMAT_VERSION {
            return Err(PromptError::Exemplars(format!(
                "unsupported version {} (expected {EXEMPLAR_FORMAT_VERSION})",
                self.version
            )));
        }
        for (id, list) in &self.relations {
            if list.len() != EXEMPLARS_PER_RELATION {
                return Err(PromptError::Exemplars(format!(
                    "relation `{id}` has {} exemplars, expected {EXEMPLARS_PER_RELATION}",
                    list.len()
                )));
            }
            for ex in list {
                if !matches!(ex.answer.as_str(), "Yes" | "No") {
                    return Err(PromptError::Exemplars(format!(
                        "relation `{id}`: answer must be Yes or No, got `{}`",
                        ex.answer
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every configured relation has exemplars.
    pub fn check_covers(&self, relations: &RelationSet) -> Result<(), PromptError> {
        for id in relations.ids() {
            self.for_relation(id)?;
        }
        Ok(())
    }

    pub fn for_relation(&self, id: &str) -> Result<&[Exemplar], PromptError> {
        self.relations
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| PromptError::Exemplars(format!("no exemplars for relation `{id}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// One exemplar as a user turn and the answer JSON the assistant gives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarTurn {
    pub question: String,
    pub answer_json: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_preamble: String,
    pub exemplars: Vec<ExemplarTurn>,
    pub main_title: String,
    pub head: String,
    pub context_block: String,
    pub question: String,
}

fn user_message(title: &str, term: &str, context: &str, question: &str) -> String {
    format!(
        "Web page main title: {title}\nMatched term: {term}\n\nContext:\n{context}\n\nQuestion: {question}"
    )
}

impl PromptBundle {
    pub fn final_user_message(&self) -> String {
        user_message(&self.main_title, &self.head, &self.context_block, &self.question)
    }

    /// System preamble, exemplars as alternating user/assistant turns, then
    /// the query.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(2 + 2 * self.exemplars.len());
        out.push(ChatMessage { role: Role::System, content: self.system_preamble.clone() });
        for ex in &self.exemplars {
            out.push(ChatMessage { role: Role::User, content: ex.question.clone() });
            out.push(ChatMessage { role: Role::Assistant, content: ex.answer_json.clone() });
        }
        out.push(ChatMessage { role: Role::User, content: self.final_user_message() });
        out
    }
}

pub fn build_prompt(
    candidate: &CandidatePair,
    retrieved: &[Chunk],
    exemplars: &ExemplarSet,
    relations: &RelationSet,
) -> Result<PromptBundle, PromptError> {
    if retrieved.is_empty() {
        return Err(PromptError::EmptyContext);
    }
    let question = build_query(&candidate.head.text, relations, &candidate.relation, &candidate.tail)?;
    let exemplars = exemplars
        .for_relation(&candidate.relation)?
        .iter()
        .map(|e| ExemplarTurn { question: e.user_turn(), answer_json: e.answer_json() })
        .collect();
    let context_block = retrieved
        .iter()
        .map(|c| format!("[{}]\n{}", candidate.section_path, c.text))
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(PromptBundle {
        system_preamble: SYSTEM_PREAMBLE.to_string(),
        exemplars,
        main_title: candidate.tail.clone(),
        head: candidate.head.text.clone(),
        context_block,
        question,
    })
}
