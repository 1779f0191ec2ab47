//! JSON-over-HTTP chat transport with a JSON-lines audit log.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use efs_core::generator::{ChatTransport, Prompt, TransportError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{GeneratorConfig, API_KEY_ENV};
use crate::error::{IoError, Result};

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub system: String,
    pub user: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

/// Wraps any transport and appends every exchange to a log file.
pub struct Audited<T> {
    inner: T,
    log: File,
    seq: u64,
    endpoint: String,
    model: String,
    temperature: f64,
}

impl<T> Audited<T> {
    pub fn new(inner: T, log_path: &Path, cfg: &GeneratorConfig) -> Result<Self> {
        if let Some(parent) = log_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|e| IoError::Open(log_path.display().to_string(), e))?;
        Ok(Self {
            inner,
            log,
            seq: 0,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
        })
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: ChatTransport> ChatTransport for Audited<T> {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, TransportError> {
        let outcome = self.inner.complete(prompt);
        self.seq += 1;
        let entry = AuditEntry {
            seq: self.seq,
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            temperature: self.temperature,
            system: prompt.system.clone(),
            user: prompt.user.clone(),
            response: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().map(|e| e.0.clone()),
        };
        let line = serde_json::to_string(&entry).map_err(|e| TransportError(format!("audit log: {e}")))?;
        writeln!(self.log, "{line}")
            .and_then(|_| self.log.flush())
            .map_err(|e| TransportError(format!("audit log: {e}")))?;
        outcome
    }
}

/// Chat-completions style endpoint: system and user messages in, the first
/// choice's message content out.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: String,
}

impl HttpTransport {
    /// Fails when the endpoint, model or API key is missing.
    pub fn from_config(cfg: &GeneratorConfig) -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| IoError::Config(format!("remote generation needs the {API_KEY_ENV} environment variable")))?;
        if cfg.endpoint.trim().is_empty() || cfg.model.trim().is_empty() {
            return Err(IoError::Config("remote generation needs generator.endpoint and generator.model".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        Ok(Self { agent, endpoint: cfg.endpoint.clone(), model: cfg.model.clone(), temperature: cfg.temperature, api_key })
    }

    pub fn request_body(&self, prompt: &Prompt) -> serde_json::Value {
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        })
    }
}

/// Pulls the reply text out of a chat-completions response.
pub fn reply_text(body: &serde_json::Value) -> Option<String> {
    body.pointer("/choices/0/message/content").and_then(|v| v.as_str()).map(str::to_owned)
}

impl ChatTransport for HttpTransport {
    fn complete(&mut self, prompt: &Prompt) -> Result<String, TransportError> {
        let body = self.request_body(prompt);
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| TransportError(e.to_string()))?;
        let value: serde_json::Value =
            response.body_mut().read_json().map_err(|e| TransportError(format!("bad response body: {e}")))?;
        reply_text(&value).ok_or_else(|| TransportError("response has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl ChatTransport for Echo {
        fn complete(&mut self, prompt: &Prompt) -> Result<String, TransportError> {
            if prompt.user.is_empty() {
                Err(TransportError("empty".into()))
            } else {
                Ok(format!("[\"{}\"]", prompt.user))
            }
        }
    }

    #[test]
    fn audit_log_records_each_exchange() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("logs/audit.jsonl");
        let cfg = GeneratorConfig { model: "m".into(), ..GeneratorConfig::default() };
        let mut t = Audited::new(Echo, &path, &cfg).unwrap();
        let ok = Prompt { system: "s".into(), user: "u".into() };
        let bad = Prompt { system: "s".into(), user: String::new() };
        assert!(t.complete(&ok).is_ok());
        assert!(t.complete(&bad).is_err());
        let lines: Vec<AuditEntry> =
            std::fs::read_to_string(&path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].response.as_deref(), Some("[\"u\"]"));
        assert_eq!(lines[1].error.as_deref(), Some("empty"));
        assert_eq!(lines[1].seq, 2);
        assert_eq!(lines[0].model, "m");
    }

    #[test]
    fn reply_extraction() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "[\"a_3_v1 = returns\"]"}}]});
        assert_eq!(reply_text(&body).as_deref(), Some("[\"a_3_v1 = returns\"]"));
        assert_eq!(reply_text(&json!({"choices": []})), None);
    }
}
