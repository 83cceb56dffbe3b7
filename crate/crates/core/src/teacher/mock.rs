//! Programmable in-process mock transport.
//!
//! The mock implements [`Transport`] directly, so the full client stack
//! (retry, backoff, in-flight limiting, parsing) runs against it without
//! sockets. Handlers are per-endpoint closures; helpers build wire-shaped
//! reply bodies. Instrumentation tracks attempt counts and the peak
//! number of concurrently executing handlers.
//!
//! A scripted variant is reachable from the CLI through `mock:` endpoint
//! URLs, e.g. `mock:?batch=20&dup=2&malformed=1&sentinel_pct=10`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::transport::{Endpoint, RawResponse, Transport, TransportError};

/// What a mock handler tells the transport to produce.
#[derive(Debug, Clone)]
pub enum MockReply {
    /// 200 with this JSON body.
    Json(Value),
    /// Given status with a plain-text body.
    Status(u16, String),
    Timeout,
    ConnectError(String),
}

impl MockReply {
    fn into_result(self) -> Result<RawResponse, TransportError> {
        match self {
            MockReply::Json(value) => Ok(RawResponse {
                status: 200,
                body: value.to_string(),
            }),
            MockReply::Status(status, body) => Ok(RawResponse { status, body }),
            MockReply::Timeout => Err(TransportError::Timeout),
            MockReply::ConnectError(message) => Err(TransportError::Connect(message)),
        }
    }
}

/// Builds a chat-completions body carrying `content`.
pub fn chat_body(content: &str) -> Value {
    json!({
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }]
    })
}

pub fn moderation_body(flagged: bool, toxicity: f64) -> Value {
    json!({
        "results": [{
            "flagged": flagged,
            "category_scores": { "toxicity": toxicity, "hate": toxicity / 2.0 }
        }]
    })
}

pub fn embeddings_body(vectors: &[Vec<f64>]) -> Value {
    let data: Vec<Value> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| json!({ "index": i, "embedding": v }))
        .collect();
    json!({ "data": data })
}

/// Pulls the user-role message content out of a chat request body.
pub fn user_message(body: &Value) -> &str {
    body["messages"]
        .as_array()
        .and_then(|msgs| {
            msgs.iter()
                .find(|m| m["role"] == "user")
                .and_then(|m| m["content"].as_str())
        })
        .unwrap_or("")
}

/// Pulls the system-role message content out of a chat request body.
pub fn system_message(body: &Value) -> &str {
    body["messages"]
        .as_array()
        .and_then(|msgs| {
            msgs.iter()
                .find(|m| m["role"] == "system")
                .and_then(|m| m["content"].as_str())
        })
        .unwrap_or("")
}

/// Deterministic 16-dim embedding derived from a text's hash.
pub fn hash_embedding(text: &str) -> Vec<f64> {
    let digest = Sha256::digest(text.as_bytes());
    digest
        .iter()
        .take(16)
        .map(|b| (*b as f64 - 127.5) / 127.5)
        .collect()
}

pub fn hash_hex(text: &str, len: usize) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(len);
    for byte in digest.iter() {
        out.push_str(&format!("{byte:02x}"));
        if out.len() >= len {
            break;
        }
    }
    out.truncate(len);
    out
}

type Handler = Box<dyn Fn(&Value) -> MockReply + Send + Sync>;

#[derive(Default)]
pub struct MockStats {
    pub chat_attempts: AtomicUsize,
    pub moderation_attempts: AtomicUsize,
    pub embeddings_attempts: AtomicUsize,
    pub categories_attempts: AtomicUsize,
    in_flight: AtomicUsize,
    pub peak_in_flight: AtomicUsize,
}

impl MockStats {
    pub fn peak(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }
}

pub struct MockTransport {
    chat: Handler,
    moderation: Handler,
    embeddings: Handler,
    categories: Handler,
    /// Replies consumed before the regular chat handler, one per call.
    chat_script: Mutex<Vec<MockReply>>,
    /// Artificial handler latency, for concurrency tests.
    latency: std::time::Duration,
    pub stats: MockStats,
}

impl Default for MockTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl MockTransport {
    /// Echo chat, sentinel-flag moderation, hash embeddings.
    pub fn new() -> Self {
        MockTransport {
            chat: Box::new(|body| MockReply::Json(chat_body(user_message(body)))),
            moderation: Box::new(|body| {
                let input = body["input"].as_str().unwrap_or("");
                let flagged = input.contains(SENTINEL);
                MockReply::Json(moderation_body(flagged, if flagged { 0.97 } else { 0.03 }))
            }),
            embeddings: Box::new(|body| {
                let texts: Vec<&str> = body["input"]
                    .as_array()
                    .map(|a| a.iter().filter_map(|t| t.as_str()).collect())
                    .unwrap_or_default();
                let vectors: Vec<Vec<f64>> = texts.iter().map(|t| hash_embedding(t)).collect();
                MockReply::Json(embeddings_body(&vectors))
            }),
            categories: Box::new(|_| {
                MockReply::Json(json!({ "categories": [], "next_offset": null }))
            }),
            chat_script: Mutex::new(Vec::new()),
            latency: std::time::Duration::ZERO,
            stats: MockStats::default(),
        }
    }

    pub fn with_chat(
        mut self,
        handler: impl Fn(&Value) -> MockReply + Send + Sync + 'static,
    ) -> Self {
        self.chat = Box::new(handler);
        self
    }

    pub fn with_moderation(
        mut self,
        handler: impl Fn(&Value) -> MockReply + Send + Sync + 'static,
    ) -> Self {
        self.moderation = Box::new(handler);
        self
    }

    pub fn with_embeddings(
        mut self,
        handler: impl Fn(&Value) -> MockReply + Send + Sync + 'static,
    ) -> Self {
        self.embeddings = Box::new(handler);
        self
    }

    pub fn with_categories(
        mut self,
        handler: impl Fn(&Value) -> MockReply + Send + Sync + 'static,
    ) -> Self {
        self.categories = Box::new(handler);
        self
    }

    /// Queues replies served (in order) before the chat handler runs.
    pub fn with_chat_script(self, replies: Vec<MockReply>) -> Self {
        *self.chat_script.lock().unwrap() = replies;
        self
    }

    pub fn with_latency(mut self, latency: std::time::Duration) -> Self {
        self.latency = latency;
        self
    }
}

/// Token the default mock moderation flags on.
pub const SENTINEL: &str = "TOXIC_SENTINEL";

impl Transport for MockTransport {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, TransportError> {
        let now = self.stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.stats.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let reply = match endpoint {
            Endpoint::ChatCompletions => {
                self.stats.chat_attempts.fetch_add(1, Ordering::SeqCst);
                let scripted = {
                    let mut script = self.chat_script.lock().unwrap();
                    if script.is_empty() {
                        None
                    } else {
                        Some(script.remove(0))
                    }
                };
                scripted.unwrap_or_else(|| (self.chat)(body))
            }
            Endpoint::Moderations => {
                self.stats
                    .moderation_attempts
                    .fetch_add(1, Ordering::SeqCst);
                (self.moderation)(body)
            }
            Endpoint::Embeddings => {
                self.stats
                    .embeddings_attempts
                    .fetch_add(1, Ordering::SeqCst);
                (self.embeddings)(body)
            }
            Endpoint::Categories => {
                self.stats
                    .categories_attempts
                    .fetch_add(1, Ordering::SeqCst);
                (self.categories)(body)
            }
        };
        self.stats.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply.into_result()
    }
}

/// Configuration parsed from a `mock:` endpoint URL.
#[derive(Debug, Clone)]
pub struct MockSpec {
    /// Examples emitted per generation prompt.
    pub batch: usize,
    /// How many of those examples repeat the first one.
    pub duplicates: usize,
    /// Dangling open-tag spans appended to the batch.
    pub malformed: usize,
    /// Percentage of plain responses that carry the toxicity sentinel.
    pub sentinel_pct: u64,
    pub seed: u64,
}

impl Default for MockSpec {
    fn default() -> Self {
        MockSpec {
            batch: 20,
            duplicates: 0,
            malformed: 0,
            sentinel_pct: 0,
            seed: 0,
        }
    }
}

impl MockSpec {
    /// Parses `mock:?key=value&...`. Returns None for non-mock URLs.
    pub fn parse(url: &str) -> Option<MockSpec> {
        let rest = url.strip_prefix("mock:")?;
        let mut spec = MockSpec::default();
        let params = rest.strip_prefix('?').unwrap_or(rest);
        for pair in params.split('&').filter(|p| !p.is_empty()) {
            let (key, value) = pair.split_once('=')?;
            match key {
                "batch" => spec.batch = value.parse().ok()?,
                "dup" => spec.duplicates = value.parse().ok()?,
                "malformed" => spec.malformed = value.parse().ok()?,
                "sentinel_pct" => spec.sentinel_pct = value.parse().ok()?,
                "seed" => spec.seed = value.parse().ok()?,
                _ => return None,
            }
        }
        Some(spec)
    }

    /// Builds the deterministic scripted transport the CLI uses for
    /// `mock:` endpoints.
    pub fn into_transport(self) -> MockTransport {
        let spec = self.clone();
        MockTransport::new().with_chat(move |body| {
            let prompt = user_message(body);
            if prompt.contains("\nGenerate ") && prompt.contains("label \"<example>\"") {
                MockReply::Json(chat_body(&spec.generation_reply(prompt)))
            } else {
                MockReply::Json(chat_body(&spec.plain_reply(prompt)))
            }
        })
    }

    fn generation_reply(&self, prompt: &str) -> String {
        let mut out = String::new();
        let mut first = String::new();
        for i in 0..self.batch {
            let text = if i > 0 && i <= self.duplicates {
                first.clone()
            } else {
                let token = hash_hex(&format!("{}|{}|{}", self.seed, prompt, i), 10);
                format!("Write a short note about item {token}.")
            };
            if i == 0 {
                first = text.clone();
            }
            out.push_str(&format!("<example>{text}</example>\n"));
        }
        for i in 0..self.malformed {
            out.push_str(&format!("<example>broken span {i} with no close tag\n"));
        }
        out
    }

    fn plain_reply(&self, instruction: &str) -> String {
        let token = hash_hex(&format!("{}|{}", self.seed, instruction), 12);
        let bucket = u64::from_str_radix(&token[..4], 16).unwrap_or(0) % 100;
        if bucket < self.sentinel_pct {
            format!("Concise answer {token}. {SENTINEL}")
        } else {
            format!("Concise answer {token}.")
        }
    }
}
