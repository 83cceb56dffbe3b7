//! Transport abstraction: a thing that can POST JSON to a named endpoint.
//!
//! Production uses [`HttpTransport`]; tests use the in-process
//! programmable mock. The retry policy lives above the transport, in the
//! client.

use std::time::Duration;

use serde_json::Value;

/// The endpoints the pipeline talks to, relative to the configured base URL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    ChatCompletions,
    Moderations,
    Embeddings,
    Categories,
}

impl Endpoint {
    pub fn path(&self) -> &'static str {
        match self {
            Endpoint::ChatCompletions => "/chat/completions",
            Endpoint::Moderations => "/moderations",
            Endpoint::Embeddings => "/embeddings",
            Endpoint::Categories => "/categories",
        }
    }
}

/// Status and raw body of one HTTP exchange. Non-2xx statuses are returned
/// here, not as transport errors; only failures to obtain a response at
/// all are errors.
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
}

pub trait Transport: Send + Sync {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, TransportError>;
}

/// Blocking HTTP transport. Sends `Authorization: Bearer <credential>`
/// when a non-empty credential is configured.
pub struct HttpTransport {
    base_url: String,
    credential: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(
        base_url: impl Into<String>,
        credential: Option<String>,
        timeout: Duration,
    ) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        let mut base_url = base_url.into();
        while base_url.ends_with('/') {
            base_url.pop();
        }
        Ok(HttpTransport {
            base_url,
            credential,
            client,
        })
    }
}

impl Transport for HttpTransport {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, TransportError> {
        let url = format!("{}{}", self.base_url, endpoint.path());
        let mut request = self.client.post(&url).json(body);
        if let Some(credential) = self.credential.as_deref() {
            if !credential.is_empty() {
                request = request.bearer_auth(credential);
            }
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Connect(e.to_string())
            }
        })?;
        Ok(RawResponse { status, body })
    }
}
