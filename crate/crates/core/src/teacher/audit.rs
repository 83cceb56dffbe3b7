//! Append-only JSONL audit log of every transport attempt: request body,
//! status, response body. The bearer credential never reaches the log —
//! it travels in a header the audit layer does not see — and any
//! accidental occurrence of the secret inside a body is masked.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde_json::{json, Value};

use super::transport::Endpoint;

pub struct AuditLog {
    writer: Mutex<BufWriter<std::fs::File>>,
    credential: Option<String>,
}

impl AuditLog {
    /// Opens (appending) `audit.jsonl` inside `dir`, creating the
    /// directory if needed.
    pub fn open(dir: impl AsRef<Path>, credential: Option<String>) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.as_ref().join("audit.jsonl"))?;
        Ok(AuditLog {
            writer: Mutex::new(BufWriter::new(file)),
            credential,
        })
    }

    fn redact(&self, text: String) -> String {
        match self.credential.as_deref() {
            Some(secret) if !secret.is_empty() => text.replace(secret, "[redacted]"),
            _ => text,
        }
    }

    pub fn record(
        &self,
        endpoint: Endpoint,
        attempt: u32,
        request: &Value,
        status: Option<u16>,
        response: Result<&str, &str>,
    ) {
        let entry = json!({
            "ts": chrono::Utc::now().to_rfc3339(),
            "endpoint": endpoint.path(),
            "attempt": attempt,
            "request": serde_json::from_str::<Value>(&self.redact(request.to_string()))
                .unwrap_or(Value::Null),
            "status": status,
            "response": response.ok().map(|r| self.redact(r.to_string())),
            "error": response.err(),
        });
        if let Ok(mut writer) = self.writer.lock() {
            let _ = writeln!(writer, "{entry}");
            let _ = writer.flush();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_masks_credential_in_bodies() {
        let dir = tempfile::tempdir().unwrap();
        let log = AuditLog::open(dir.path(), Some("sk-secret-123".into())).unwrap();
        log.record(
            Endpoint::ChatCompletions,
            1,
            &json!({"messages": [{"content": "key is sk-secret-123"}]}),
            Some(200),
            Ok("echoed sk-secret-123"),
        );
        drop(log);
        let content = std::fs::read_to_string(dir.path().join("audit.jsonl")).unwrap();
        assert!(!content.contains("sk-secret-123"));
        assert!(content.contains("[redacted]"));
        assert!(content.contains("/chat/completions"));
    }
}
