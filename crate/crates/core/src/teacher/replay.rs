//! Record/replay transports for fixture-based tests.
//!
//! [`RecordingTransport`] wraps any transport and appends every completed
//! exchange to a JSONL transcript. [`ReplayTransport`] serves a transcript
//! back, keyed by endpoint and canonical request body, so a flow captured
//! once against a live endpoint can be replayed byte-exactly with no
//! network.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::transport::{Endpoint, RawResponse, Transport, TransportError};

#[derive(Debug, Serialize, Deserialize)]
struct Exchange {
    endpoint: String,
    request: Value,
    status: u16,
    body: String,
}

fn key_of(endpoint: Endpoint, request: &Value) -> (String, String) {
    // serde_json maps are sorted, so to_string is canonical for a given
    // semantic body
    (endpoint.path().to_string(), request.to_string())
}

pub struct RecordingTransport<T: Transport> {
    inner: T,
    writer: Mutex<BufWriter<File>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn create(inner: T, transcript: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(transcript.as_ref())?;
        Ok(RecordingTransport {
            inner,
            writer: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, TransportError> {
        let response = self.inner.post(endpoint, body)?;
        let exchange = Exchange {
            endpoint: endpoint.path().to_string(),
            request: body.clone(),
            status: response.status,
            body: response.body.clone(),
        };
        if let Ok(mut writer) = self.writer.lock() {
            if let Ok(line) = serde_json::to_string(&exchange) {
                let _ = writeln!(writer, "{line}");
                let _ = writer.flush();
            }
        }
        Ok(response)
    }
}

pub struct ReplayTransport {
    exchanges: HashMap<(String, String), RawResponse>,
}

impl ReplayTransport {
    pub fn load(transcript: impl AsRef<Path>) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(transcript.as_ref())?);
        let mut exchanges = HashMap::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let exchange: Exchange = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
            exchanges.insert(
                (exchange.endpoint, exchange.request.to_string()),
                RawResponse {
                    status: exchange.status,
                    body: exchange.body,
                },
            );
        }
        Ok(ReplayTransport { exchanges })
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn post(&self, endpoint: Endpoint, body: &Value) -> Result<RawResponse, TransportError> {
        match self.exchanges.get(&key_of(endpoint, body)) {
            Some(response) => Ok(response.clone()),
            None => Err(TransportError::Connect(format!(
                "no recorded exchange for {} with this request body",
                endpoint.path()
            ))),
        }
    }
}
