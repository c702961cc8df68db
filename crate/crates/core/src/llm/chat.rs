use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::judgment::{parse_judgment, Judgment};
use super::prompt::{build_prompt, ExemplarSet, PromptBundle};
use crate::candidate::CandidatePair;
use crate::error::{EndpointError, PipelineError};
use crate::http::{EndpointSettings, JsonEndpoint};
use crate::relation::RelationSet;
use crate::retrieval::Chunk;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatSettings {
    #[serde(flatten)]
    pub endpoint: EndpointSettings,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Sent only when set; not every server accepts it.
    pub seed: Option<u64>,
}

impl Default for ChatSettings {
    fn default() -> Self {
        ChatSettings {
            endpoint: EndpointSettings::default(),
            temperature: 0.0,
            max_tokens: 512,
            seed: None,
        }
    }
}

/// Client for the `chat/completions` protocol.
#[derive(Debug, Clone)]
pub struct ChatEndpoint {
    endpoint: JsonEndpoint,
    settings: ChatSettings,
}

impl ChatEndpoint {
    pub fn new(settings: ChatSettings, api_key: Option<String>) -> Self {
        ChatEndpoint {
            endpoint: JsonEndpoint::new(settings.endpoint.clone(), "chat/completions", api_key),
            settings,
        }
    }

    pub fn model(&self) -> &str {
        &self.settings.endpoint.model
    }

    pub fn request_count(&self) -> u64 {
        self.endpoint.request_count()
    }

    pub fn request_body(&self, prompt: &PromptBundle) -> Value {
        let mut body = json!({
            "model": self.model(),
            "messages": prompt.messages(),
            "temperature": self.settings.temperature,
            "max_tokens": self.settings.max_tokens,
        });
        if let Some(seed) = self.settings.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    pub async fn send(&self, prompt: &PromptBundle) -> Result<Judgment, EndpointError> {
        let started = Instant::now();
        let reply = self.endpoint.post(&self.request_body(prompt)).await?;
        let content = reply.body["choices"][0]["message"]["content"].as_str();
        let mut judgment = match content {
            Some(text) => parse_judgment(text),
            None => Judgment::malformed(&reply.body.to_string()),
        };
        judgment.latency_ms = started.elapsed().as_millis() as u64;
        judgment.model_id = self.model().to_string();
        judgment.retries = reply.retries;
        Ok(judgment)
    }
}

/// Build the prompt for a candidate and ask the model.
pub async fn classify(
    candidate: &CandidatePair,
    retrieved: &[Chunk],
    exemplars: &ExemplarSet,
    relations: &RelationSet,
    endpoint: &ChatEndpoint,
) -> Result<Judgment, PipelineError> {
    let prompt = build_prompt(candidate, retrieved, exemplars, relations)?;
    Ok(endpoint.send(&prompt).await?)
}
