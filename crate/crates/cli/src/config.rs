//! Run configuration: defaults, overlaid by the TOML config file,
//! overlaid by command-line flags. Every command with an output writes
//! its fully resolved config (credential redacted) beside that output.

use std::path::{Path, PathBuf};
use std::time::Duration;

use distill_core::teacher::{RetryPolicy, Sampling, TeacherClient, TeacherConfig};
use serde::{Deserialize, Serialize};

use crate::GlobalArgs;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    endpoint: Option<String>,
    model: Option<String>,
    seed: Option<u64>,
    concurrency: Option<usize>,
    audit_dir: Option<PathBuf>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    max_attempts: Option<u32>,
    base_backoff_ms: Option<u64>,
    backoff_factor: Option<f64>,
    timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub endpoint: String,
    pub model: String,
    pub seed: u64,
    pub concurrency: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub backoff_factor: f64,
    pub timeout_secs: u64,
    /// Whether a credential was available; the value itself never leaves
    /// the environment.
    pub credential: &'static str,
}

impl RunConfig {
    pub fn resolve(args: &GlobalArgs) -> Result<RunConfig, String> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let content = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
                toml::from_str(&content)
                    .map_err(|e| format!("bad config {}: {e}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let credential = TeacherConfig::credential_from_env();
        Ok(RunConfig {
            endpoint: args.endpoint.clone().or(file.endpoint).unwrap_or_default(),
            model: args
                .model
                .clone()
                .or(file.model)
                .unwrap_or_else(|| "gpt-3.5-turbo".to_string()),
            seed: args.seed.or(file.seed).unwrap_or(0),
            concurrency: args.concurrency.or(file.concurrency).unwrap_or(4),
            audit_dir: args.audit_dir.clone().or(file.audit_dir),
            temperature: args.temperature.or(file.temperature),
            top_p: args.top_p.or(file.top_p),
            max_attempts: file.max_attempts.unwrap_or(5),
            base_backoff_ms: file.base_backoff_ms.unwrap_or(500),
            backoff_factor: file.backoff_factor.unwrap_or(2.0),
            timeout_secs: file.timeout_secs.unwrap_or(60),
            credential: if credential.is_some() {
                "[redacted]"
            } else {
                "absent"
            },
        })
    }

    pub fn teacher_config(&self) -> TeacherConfig {
        TeacherConfig {
            endpoint_url: self.endpoint.clone(),
            model_name: self.model.clone(),
            credential: TeacherConfig::credential_from_env(),
            max_in_flight: self.concurrency,
            retry: RetryPolicy {
                max_attempts: self.max_attempts,
                base_backoff: Duration::from_millis(self.base_backoff_ms),
                backoff_factor: self.backoff_factor,
            },
            timeout: Duration::from_secs(self.timeout_secs),
            sampling: Sampling {
                temperature: self.temperature,
                top_p: self.top_p,
            },
        }
    }

    /// Builds the teacher client, wiring the audit log when configured.
    pub fn client(&self) -> Result<TeacherClient, crate::CliError> {
        let config = self.teacher_config();
        let client = TeacherClient::from_config(config)
            .map_err(|e| crate::CliError::Usage(e.to_string()))?;
        match &self.audit_dir {
            Some(dir) => {
                let audit = distill_core::teacher::AuditLog::open(
                    dir,
                    TeacherConfig::credential_from_env(),
                )
                .map_err(|e| crate::CliError::Failure(format!("cannot open audit log: {e}")))?;
                Ok(client.with_audit(std::sync::Arc::new(audit)))
            }
            None => Ok(client),
        }
    }

    /// Writes the resolved config as TOML next to `output`
    /// (`<output>.run.toml`).
    pub fn log_beside(&self, command: &str, output: &Path) -> Result<(), crate::CliError> {
        #[derive(Serialize)]
        struct Logged<'a> {
            command: &'a str,
            #[serde(flatten)]
            config: &'a RunConfig,
        }
        let rendered = toml::to_string(&Logged {
            command,
            config: self,
        })
        .map_err(|e| crate::CliError::Failure(format!("cannot serialize config: {e}")))?;
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".run.toml");
        let path = output.with_file_name(name);
        std::fs::write(&path, rendered).map_err(|e| {
            crate::CliError::Failure(format!("cannot write {}: {e}", path.display()))
        })?;
        Ok(())
    }
}
