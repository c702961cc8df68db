//! Binary relation classification with a chat model.

mod chat;
mod judgment;
mod prompt;

pub use chat::{classify, ChatEndpoint, ChatSettings};
pub use judgment::{parse_judgment, Answer, Judgment};
pub use prompt::{
    answer_json, build_prompt, ChatMessage, Exemplar, ExemplarSet, ExemplarTurn, PromptBundle,
    Role, EXEMPLARS_PER_RELATION, SYSTEM_PREAMBLE,
};
