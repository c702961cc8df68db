#![allow(dead_code)]

use relext_core::mock::{MockKind, MockScript, MockServer};
use relext_core::{ChatEndpoint, ChatSettings, EmbeddingEndpoint, EmbeddingSettings, EndpointSettings};

pub fn settings(base_url: &str, retries: u32) -> EndpointSettings {
    EndpointSettings {
        base_url: base_url.to_string(),
        model: "mock-model".into(),
        max_retries: retries,
        max_concurrency: 4,
        requests_per_minute: 0,
        retry_base_ms: 1,
        retry_max_ms: 5,
        timeout_secs: 10,
    }
}

pub async fn chat_mock(script: MockScript) -> (MockServer, ChatEndpoint) {
    let server = MockServer::local(MockKind::Chat, script).await.unwrap();
    let chat = ChatEndpoint::new(
        ChatSettings { endpoint: settings(&server.base_url(), 2), ..Default::default() },
        None,
    );
    (server, chat)
}

pub async fn embed_mock(script: MockScript, batch_limit: usize) -> (MockServer, EmbeddingEndpoint) {
    let server = MockServer::local(MockKind::Embed, script).await.unwrap();
    let embed = EmbeddingEndpoint::new(
        EmbeddingSettings { endpoint: settings(&server.base_url(), 2), batch_limit },
        None,
    );
    (server, embed)
}
