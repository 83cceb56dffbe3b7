//! Clients for the chat-completion, moderation, and embedding endpoints.
//!
//! One retry policy serves every endpoint: transient failures (timeout,
//! connection error, 429, 5xx) back off exponentially up to the attempt
//! cap; any other 4xx is permanent and never retried. A shared permit
//! pool bounds the number of requests in flight across all threads using
//! the client.

mod audit;
mod limit;
mod mock;
mod replay;
mod transport;

pub use audit::AuditLog;
pub use limit::{parallel_map, Semaphore};
pub use mock::{
    chat_body, embeddings_body, hash_embedding, hash_hex, moderation_body, system_message,
    user_message, MockReply, MockSpec, MockTransport, SENTINEL,
};
pub use replay::{RecordingTransport, ReplayTransport};
pub use transport::{Endpoint, HttpTransport, RawResponse, Transport, TransportError};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use crate::parsegen::{self, ParsedBatch};
use crate::promptgen::PromptSpec;

/// Environment variable the bearer credential is read from.
pub const CREDENTIAL_ENV_VAR: &str = "LAMINI_API_KEY";

/// System message used for every response-generation call. Single
/// definition; tests assert it is byte-identical wherever it appears.
pub const SYSTEM_MESSAGE: &str = "You are a helpful assistant, but you must respond the provided instructions as concise as possible.";

#[derive(Debug, thiserror::Error)]
pub enum TeacherError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Exhausted {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("permanent endpoint error (status {status}): {message}")]
    Permanent { status: u16, message: String },
    #[error("endpoint returned empty content")]
    EmptyResponse,
    #[error("malformed endpoint response: {0}")]
    MalformedResponse(String),
    #[error("no parseable examples in teacher output")]
    BatchParse { raw: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub backoff_factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_backoff: Duration::from_millis(500),
            backoff_factor: 2.0,
        }
    }
}

/// Optional sampling parameters; absent fields mean endpoint defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sampling {
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TeacherConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub credential: Option<String>,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub sampling: Sampling,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            endpoint_url: String::new(),
            model_name: "gpt-3.5-turbo".into(),
            credential: None,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
            sampling: Sampling::default(),
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<(), TeacherError> {
        if self.max_in_flight < 1 {
            return Err(TeacherError::Config("max_in_flight must be >= 1".into()));
        }
        if self.retry.max_attempts < 1 {
            return Err(TeacherError::Config("max_attempts must be >= 1".into()));
        }
        if self.retry.backoff_factor < 1.0 {
            return Err(TeacherError::Config("backoff_factor must be >= 1".into()));
        }
        Ok(())
    }

    pub fn credential_from_env() -> Option<String> {
        std::env::var(CREDENTIAL_ENV_VAR).ok()
    }
}

/// A single chat exchange: system framing, user content, sampling knobs.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub system_message: String,
    pub user_message: String,
    pub sampling: Sampling,
}

/// Moderation verdict for one text.
#[derive(Debug, Clone, PartialEq)]
pub struct ModerationVerdict {
    pub flagged: bool,
    pub category_scores: BTreeMap<String, f64>,
}

type Sleeper = dyn Fn(Duration) + Send + Sync;

pub struct TeacherClient {
    config: TeacherConfig,
    transport: Arc<dyn Transport>,
    limiter: Semaphore,
    audit: Option<Arc<AuditLog>>,
    sleeper: Box<Sleeper>,
}

impl TeacherClient {
    pub fn new(config: TeacherConfig, transport: Arc<dyn Transport>) -> Result<Self, TeacherError> {
        config.validate()?;
        let limiter = Semaphore::new(config.max_in_flight);
        Ok(TeacherClient {
            config,
            transport,
            limiter,
            audit: None,
            sleeper: Box::new(std::thread::sleep),
        })
    }

    /// Builds a client from the endpoint URL: `mock:` URLs get the
    /// deterministic scripted transport, anything else goes over HTTP
    /// (which requires a credential).
    pub fn from_config(config: TeacherConfig) -> Result<Self, TeacherError> {
        if let Some(spec) = MockSpec::parse(&config.endpoint_url) {
            let transport = Arc::new(spec.into_transport());
            return TeacherClient::new(config, transport);
        }
        if config.endpoint_url.is_empty() {
            return Err(TeacherError::Config("endpoint URL is required".into()));
        }
        if config.credential.is_none() {
            return Err(TeacherError::Config(format!(
                "no credential: set {CREDENTIAL_ENV_VAR} (or use a mock: endpoint)"
            )));
        }
        let transport = HttpTransport::new(
            config.endpoint_url.clone(),
            config.credential.clone(),
            config.timeout,
        )
        .map_err(|e| TeacherError::Config(e.to_string()))?;
        TeacherClient::new(config, Arc::new(transport))
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.config
    }

    pub fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }

    /// POSTs a body to an endpoint under the retry policy and in-flight
    /// bound, returning the parsed 2xx JSON body.
    pub fn post_json(&self, endpoint: Endpoint, body: &Value) -> Result<Value, TeacherError> {
        let retry = &self.config.retry;
        let mut delay = retry.base_backoff;
        let mut last_transient: Option<(Option<u16>, String)> = None;
        for attempt in 1..=retry.max_attempts {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.transport.post(endpoint, body)
            };
            match outcome {
                Ok(response) => {
                    if let Some(audit) = &self.audit {
                        audit.record(
                            endpoint,
                            attempt,
                            body,
                            Some(response.status),
                            Ok(&response.body),
                        );
                    }
                    if (200..300).contains(&response.status) {
                        return serde_json::from_str(&response.body)
                            .map_err(|e| TeacherError::MalformedResponse(e.to_string()));
                    }
                    if response.status == 429 || (500..600).contains(&response.status) {
                        last_transient = Some((Some(response.status), response.body));
                    } else {
                        return Err(TeacherError::Permanent {
                            status: response.status,
                            message: response.body,
                        });
                    }
                }
                Err(error) => {
                    if let Some(audit) = &self.audit {
                        audit.record(endpoint, attempt, body, None, Err(&error.to_string()));
                    }
                    last_transient = Some((None, error.to_string()));
                }
            }
            if attempt < retry.max_attempts {
                (self.sleeper)(delay);
                delay = delay.mul_f64(retry.backoff_factor);
            }
        }
        let (status, message) = last_transient.unwrap_or((None, "no attempts made".into()));
        Err(TeacherError::Exhausted {
            attempts: retry.max_attempts,
            status,
            message,
        })
    }

    /// Sends one chat request and returns the assistant message content.
    pub fn chat_complete(&self, request: &ChatRequest) -> Result<String, TeacherError> {
        if request.user_message.is_empty() {
            return Err(TeacherError::Precondition(
                "user_message must be non-empty".into(),
            ));
        }
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [
                { "role": "system", "content": request.system_message },
                { "role": "user", "content": request.user_message },
            ],
        });
        if let Some(t) = request.sampling.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(p) = request.sampling.top_p {
            body["top_p"] = json!(p);
        }
        let value = self.post_json(Endpoint::ChatCompletions, &body)?;
        let content = value["choices"]
            .get(0)
            .and_then(|c| c["message"]["content"].as_str())
            .ok_or_else(|| {
                TeacherError::MalformedResponse("missing choices[0].message.content".into())
            })?;
        if content.is_empty() {
            return Err(TeacherError::EmptyResponse);
        }
        Ok(content.to_string())
    }

    /// Asks the teacher to answer one instruction under the concise-answer
    /// system message. The reply is returned verbatim except for a
    /// trailing-newline strip.
    pub fn generate_response(&self, instruction: &str) -> Result<String, TeacherError> {
        if instruction.is_empty() {
            return Err(TeacherError::Precondition(
                "instruction must be non-empty".into(),
            ));
        }
        let content = self.chat_complete(&ChatRequest {
            system_message: SYSTEM_MESSAGE.to_string(),
            user_message: instruction.to_string(),
            sampling: self.config.sampling,
        })?;
        Ok(content.trim_end_matches(['\r', '\n']).to_string())
    }

    /// Sends a rendered generation prompt and parses the tagged batch out
    /// of the reply. Zero parseable examples is an error carrying the raw
    /// response for audit.
    pub fn generate_instruction_batch(
        &self,
        spec: &PromptSpec,
    ) -> Result<ParsedBatch, TeacherError> {
        let content = self.chat_complete(&ChatRequest {
            system_message: SYSTEM_MESSAGE.to_string(),
            user_message: spec.rendered_text.clone(),
            sampling: self.config.sampling,
        })?;
        let batch = parsegen::extract_examples(&content, spec.requested_batch);
        if batch.examples.is_empty() {
            return Err(TeacherError::BatchParse { raw: content });
        }
        Ok(batch)
    }

    /// Submits one text to the moderation endpoint.
    pub fn moderate(&self, text: &str) -> Result<ModerationVerdict, TeacherError> {
        if text.is_empty() {
            return Err(TeacherError::Precondition("text must be non-empty".into()));
        }
        let body = json!({ "input": text });
        let value = self.post_json(Endpoint::Moderations, &body)?;
        let result = value["results"]
            .get(0)
            .ok_or_else(|| TeacherError::MalformedResponse("missing results[0]".into()))?;
        let flagged = result["flagged"]
            .as_bool()
            .ok_or_else(|| TeacherError::MalformedResponse("missing results[0].flagged".into()))?;
        let mut category_scores = BTreeMap::new();
        if let Some(scores) = result["category_scores"].as_object() {
            for (category, score) in scores {
                if let Some(score) = score.as_f64() {
                    category_scores.insert(category.clone(), score);
                }
            }
        }
        Ok(ModerationVerdict {
            flagged,
            category_scores,
        })
    }

    /// Embeds a batch of texts, one fixed-dimension vector per text.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TeacherError> {
        if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
            return Err(TeacherError::Precondition("texts must be non-empty".into()));
        }
        let body = json!({ "model": self.config.model_name, "input": texts });
        let value = self.post_json(Endpoint::Embeddings, &body)?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| TeacherError::MalformedResponse("missing data array".into()))?;
        let mut vectors = Vec::with_capacity(data.len());
        for item in data {
            let embedding = item["embedding"]
                .as_array()
                .ok_or_else(|| TeacherError::MalformedResponse("missing embedding".into()))?;
            let vector: Vec<f64> = embedding.iter().filter_map(|x| x.as_f64()).collect();
            if vector.len() != embedding.len() {
                return Err(TeacherError::MalformedResponse(
                    "non-numeric embedding".into(),
                ));
            }
            vectors.push(vector);
        }
        if vectors.len() != texts.len() {
            return Err(TeacherError::MalformedResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        let expected = vectors[0].len();
        for v in &vectors {
            if v.len() != expected {
                return Err(TeacherError::DimensionMismatch {
                    expected,
                    got: v.len(),
                });
            }
        }
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::Ordering;
    use std::sync::Mutex;

    fn client_with(transport: MockTransport, max_attempts: u32) -> TeacherClient {
        let config = TeacherConfig {
            endpoint_url: "mock:".into(),
            retry: RetryPolicy {
                max_attempts,
                base_backoff: Duration::from_millis(1),
                backoff_factor: 2.0,
            },
            ..TeacherConfig::default()
        };
        TeacherClient::new(config, Arc::new(transport)).unwrap()
    }

    #[test]
    fn chat_returns_content_first_attempt() {
        let transport = MockTransport::new().with_chat(|_| MockReply::Json(chat_body("OK")));
        let client = client_with(transport, 3);
        let content = client
            .chat_complete(&ChatRequest {
                system_message: "s".into(),
                user_message: "u".into(),
                sampling: Sampling::default(),
            })
            .unwrap();
        assert_eq!(content, "OK");
    }

    #[test]
    fn retries_twice_then_succeeds() {
        let transport = MockTransport::new().with_chat_script(vec![
            MockReply::Status(500, "server error".into()),
            MockReply::Timeout,
            MockReply::Json(chat_body("recovered")),
        ]);
        let client = client_with(transport, 3);
        let delays: Arc<Mutex<Vec<Duration>>> = Arc::new(Mutex::new(Vec::new()));
        let recorder = Arc::clone(&delays);
        let client = client.with_sleeper(move |d| recorder.lock().unwrap().push(d));
        let content = client.generate_response("hello").unwrap();
        assert_eq!(content, "recovered");
        let delays = delays.lock().unwrap();
        assert_eq!(delays.len(), 2);
        assert!(
            delays.windows(2).all(|w| w[0] <= w[1]),
            "backoff must be non-decreasing"
        );
    }

    #[test]
    fn permanent_401_fails_after_exactly_one_attempt() {
        let transport = MockTransport::new()
            .with_chat_script(vec![MockReply::Status(401, "unauthorized".into())]);
        let client = client_with(transport, 5);
        let err = client.generate_response("hello").unwrap_err();
        assert!(matches!(err, TeacherError::Permanent { status: 401, .. }));
    }

    #[test]
    fn attempt_count_never_exceeds_max() {
        let transport = MockTransport::new().with_chat(|_| MockReply::Status(503, "down".into()));
        let client = client_with(transport, 3);
        let err = client.generate_response("hello").unwrap_err();
        assert!(matches!(
            err,
            TeacherError::Exhausted {
                attempts: 3,
                status: Some(503),
                ..
            }
        ));
    }

    #[test]
    fn attempt_counts_recorded_by_mock() {
        let transport = MockTransport::new().with_chat_script(vec![
            MockReply::Status(500, "e".into()),
            MockReply::Status(500, "e".into()),
            MockReply::Json(chat_body("fine")),
        ]);
        let config = TeacherConfig {
            retry: RetryPolicy {
                max_attempts: 3,
                base_backoff: Duration::from_millis(1),
                backoff_factor: 1.0,
            },
            ..TeacherConfig::default()
        };
        let transport = Arc::new(transport);
        let counter = Arc::clone(&transport);
        let client = TeacherClient::new(config, transport).unwrap();
        assert_eq!(client.generate_response("x").unwrap(), "fine");
        assert_eq!(counter.stats.chat_attempts.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_instruction_rejected_before_any_attempt() {
        let transport = Arc::new(MockTransport::new());
        let counter = Arc::clone(&transport);
        let client = TeacherClient::new(TeacherConfig::default(), transport).unwrap();
        assert!(matches!(
            client.generate_response("").unwrap_err(),
            TeacherError::Precondition(_)
        ));
        assert_eq!(counter.stats.chat_attempts.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn empty_content_is_an_error() {
        let transport = MockTransport::new().with_chat(|_| MockReply::Json(chat_body("")));
        let client = client_with(transport, 1);
        assert!(matches!(
            client.generate_response("x").unwrap_err(),
            TeacherError::EmptyResponse
        ));
    }

    #[test]
    fn generate_response_uses_the_concise_system_message_and_strips_newline() {
        let transport = MockTransport::new().with_chat(|body| {
            assert_eq!(system_message(body), SYSTEM_MESSAGE);
            let reversed: String = user_message(body).chars().rev().collect();
            MockReply::Json(chat_body(&format!("{reversed}\n")))
        });
        let client = client_with(transport, 1);
        assert_eq!(client.generate_response("abc").unwrap(), "cba");
    }

    #[test]
    fn batch_round_trip_with_parser() {
        let texts: Vec<String> = (0..20).map(|i| format!("instruction {i}")).collect();
        let reply = crate::parsegen::render_tagged(&texts);
        let transport = MockTransport::new().with_chat(move |_| MockReply::Json(chat_body(&reply)));
        let client = client_with(transport, 1);
        let spec = crate::promptgen::render_example_guided(
            &[
                crate::promptgen::Seed::text("a"),
                crate::promptgen::Seed::text("b"),
                crate::promptgen::Seed::text("c"),
            ],
            crate::promptgen::SourceFamily::SelfInstruct,
        )
        .unwrap();
        let batch = client.generate_instruction_batch(&spec).unwrap();
        assert_eq!(batch.examples, texts);
        assert_eq!(batch.shortfall, 0);
    }

    #[test]
    fn batch_with_garbage_tail_reports_shortfall() {
        let mut reply =
            crate::parsegen::render_tagged(&(0..18).map(|i| format!("t{i}")).collect::<Vec<_>>());
        reply.push_str("and here is some trailing garbage <example>oops");
        let transport = MockTransport::new().with_chat(move |_| MockReply::Json(chat_body(&reply)));
        let client = client_with(transport, 1);
        let spec = crate::promptgen::render_example_guided(
            &[
                crate::promptgen::Seed::text("a"),
                crate::promptgen::Seed::text("b"),
                crate::promptgen::Seed::text("c"),
            ],
            crate::promptgen::SourceFamily::SelfInstruct,
        )
        .unwrap();
        let batch = client.generate_instruction_batch(&spec).unwrap();
        assert_eq!(batch.examples.len(), 18);
        assert_eq!(batch.shortfall, 2);
    }

    #[test]
    fn batch_with_no_tags_is_an_error() {
        let transport = MockTransport::new()
            .with_chat(|_| MockReply::Json(chat_body("no tagged content here")));
        let client = client_with(transport, 1);
        let spec = crate::promptgen::render_example_guided(
            &[
                crate::promptgen::Seed::text("a"),
                crate::promptgen::Seed::text("b"),
                crate::promptgen::Seed::text("c"),
            ],
            crate::promptgen::SourceFamily::SelfInstruct,
        )
        .unwrap();
        let err = client.generate_instruction_batch(&spec).unwrap_err();
        assert!(matches!(err, TeacherError::BatchParse { .. }));
    }

    #[test]
    fn moderation_flags_sentinel_and_rejects_empty() {
        let client = client_with(MockTransport::new(), 1);
        let verdict = client
            .moderate(&format!("contains {SENTINEL} token"))
            .unwrap();
        assert!(verdict.flagged);
        assert!(verdict.category_scores["toxicity"] > 0.9);
        let benign = client.moderate("a perfectly nice sentence").unwrap();
        assert!(!benign.flagged);
        assert!(matches!(
            client.moderate("").unwrap_err(),
            TeacherError::Precondition(_)
        ));
    }

    #[test]
    fn embeddings_are_stable_per_text_and_consistent_in_dimension() {
        let client = client_with(MockTransport::new(), 1);
        let texts = vec!["alpha".to_string(), "beta".to_string(), "alpha".to_string()];
        let vectors = client.embed(&texts).unwrap();
        assert_eq!(vectors.len(), 3);
        assert_eq!(vectors[0], vectors[2]);
        assert_ne!(vectors[0], vectors[1]);
        assert!(vectors.iter().all(|v| v.len() == vectors[0].len()));
    }

    #[test]
    fn ragged_embeddings_are_an_integrity_error() {
        let transport = MockTransport::new().with_embeddings(|_| {
            MockReply::Json(embeddings_body(&[vec![1.0, 2.0], vec![1.0, 2.0, 3.0]]))
        });
        let client = client_with(transport, 1);
        let err = client.embed(&["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(
            err,
            TeacherError::DimensionMismatch {
                expected: 2,
                got: 3
            }
        ));
    }

    #[test]
    fn in_flight_never_exceeds_bound_under_load() {
        let transport = Arc::new(MockTransport::new().with_latency(Duration::from_millis(2)));
        let stats = Arc::clone(&transport);
        let config = TeacherConfig {
            max_in_flight: 4,
            ..TeacherConfig::default()
        };
        let client = Arc::new(TeacherClient::new(config, transport).unwrap());
        std::thread::scope(|scope| {
            for i in 0..100 {
                let client = Arc::clone(&client);
                scope.spawn(move || {
                    client.generate_response(&format!("request {i}")).unwrap();
                });
            }
        });
        assert_eq!(stats.stats.chat_attempts.load(Ordering::SeqCst), 100);
        let peak = stats.stats.peak();
        assert!(
            peak <= 4,
            "peak concurrency {peak} exceeded max_in_flight=4"
        );
    }

    #[test]
    fn config_validation() {
        let bad = TeacherConfig {
            max_in_flight: 0,
            ..TeacherConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TeacherConfig {
            retry: RetryPolicy {
                max_attempts: 0,
                ..RetryPolicy::default()
            },
            ..TeacherConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TeacherConfig {
            retry: RetryPolicy {
                backoff_factor: 0.5,
                ..RetryPolicy::default()
            },
            ..TeacherConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn from_config_requires_credential_for_http() {
        let config = TeacherConfig {
            endpoint_url: "http://localhost:1/v1".into(),
            ..TeacherConfig::default()
        };
        let err = match TeacherClient::from_config(config) {
            Err(e) => e,
            Ok(_) => panic!("expected a config error"),
        };
        assert!(matches!(err, TeacherError::Config(_)));
        let mock = TeacherConfig {
            endpoint_url: "mock:".into(),
            ..TeacherConfig::default()
        };
        assert!(TeacherClient::from_config(mock).is_ok());
    }
}
