//! Text-generation providers for the `generate` command.
//!
//! [`HttpProvider`] talks to an OpenAI-compatible chat completions endpoint
//! and is configured from the environment only. Replay files hold canned
//! responses as JSONL lines `{"prompt_sha256": "...", "response": "..."}`.

use std::fmt;
use std::path::Path;
use std::time::Duration;

use m2v_core::bridge::{Provider, ProviderError, ReplayProvider};
use serde_json::{json, Value};

use crate::dataset::{read_jsonl, DatasetError};

pub const ENV_API_KEY: &str = "M2V_LLM_API_KEY";
pub const ENV_BASE_URL: &str = "M2V_LLM_BASE_URL";
pub const ENV_MODEL: &str = "M2V_LLM_MODEL";

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0} is not set")]
    MissingVar(&'static str),
    #[error("cannot build HTTP client: {0}")]
    Client(String),
    #[error("replay file: {0}")]
    Replay(#[from] DatasetError),
    #[error("replay file line {line}: {message}")]
    ReplayEntry { line: usize, message: String },
}

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: String,
}

impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpProvider {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|name| std::env::var(name).ok())
    }

    /// `lookup` stands in for the process environment.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |name: &'static str| lookup(name).map(|v| v.trim().to_string()).filter(|v| !v.is_empty());
        let api_key = get(ENV_API_KEY).ok_or(ConfigError::MissingVar(ENV_API_KEY))?;
        let model = get(ENV_MODEL).ok_or(ConfigError::MissingVar(ENV_MODEL))?;
        let base = get(ENV_BASE_URL).unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ConfigError::Client(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model,
            api_key,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

impl Provider for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ProviderError(format!("request failed: {e}")))?;
        let status = response.status();
        let text = response.text().map_err(|e| ProviderError(format!("reading response: {e}")))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(300).collect();
            return Err(ProviderError(format!("HTTP {status}: {snippet}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| ProviderError(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError("response has no choices[0].message.content".to_string()))
    }
}

pub fn load_replay(path: &Path) -> Result<ReplayProvider, ConfigError> {
    let mut replay = ReplayProvider::new();
    let mut seen = std::collections::BTreeSet::new();
    for row in read_jsonl(path)? {
        let entry = |message: &str| ConfigError::ReplayEntry {
            line: row.line,
            message: message.to_string(),
        };
        let hash = row
            .fields
            .get("prompt_sha256")
            .and_then(Value::as_str)
            .map(str::to_ascii_lowercase)
            .ok_or_else(|| entry("missing `prompt_sha256`"))?;
        if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(entry("`prompt_sha256` must be 64 hex digits"));
        }
        let response = row.fields.get("response").and_then(Value::as_str).ok_or_else(|| entry("missing `response`"))?;
        if !seen.insert(hash.clone()) {
            return Err(entry("duplicate `prompt_sha256`"));
        }
        replay.insert_hash(hash, response);
    }
    Ok(replay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn env<'a>(pairs: &'a [(&'a str, &'a str)]) -> impl Fn(&str) -> Option<String> + 'a {
        move |name| pairs.iter().find(|(k, _)| *k == name).map(|(_, v)| v.to_string())
    }

    #[test]
    fn credentials_come_from_the_environment() {
        let err = HttpProvider::from_lookup(env(&[(ENV_MODEL, "m")])).unwrap_err();
        assert_eq!(err.to_string(), "M2V_LLM_API_KEY is not set");
        let err = HttpProvider::from_lookup(env(&[(ENV_API_KEY, "k"), (ENV_MODEL, " ")])).unwrap_err();
        assert_eq!(err.to_string(), "M2V_LLM_MODEL is not set");
        let p = HttpProvider::from_lookup(env(&[(ENV_API_KEY, "secret"), (ENV_MODEL, "m"), (ENV_BASE_URL, "http://h/v1/")])).unwrap();
        assert_eq!(p.endpoint(), "http://h/v1/chat/completions");
        assert!(!format!("{p:?}").contains("secret"));
    }

    /// Serves one request and hands back what it received.
    fn serve_once(status: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            let reply = format!(
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.get_mut().write_all(reply.as_bytes()).unwrap();
            head + &String::from_utf8(payload).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn chat_completion_round_trip() {
        let (url, server) = serve_once("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"visual_language: x"}}]}"#);
        let p = HttpProvider::from_lookup(env(&[(ENV_API_KEY, "k123"), (ENV_MODEL, "demo"), (ENV_BASE_URL, &url)])).unwrap();
        assert_eq!(p.complete("hello").unwrap(), "visual_language: x");
        let seen = server.join().unwrap();
        assert!(seen.starts_with("POST /v1/chat/completions "), "{seen}");
        assert!(seen.to_ascii_lowercase().contains("authorization: bearer k123"));
        let body: Value = serde_json::from_str(seen.split("\r\n\r\n").nth(1).unwrap()).unwrap();
        assert_eq!(body["model"], "demo");
        assert_eq!(body["messages"][0]["content"], "hello");
    }

    #[test]
    fn http_errors_surface_status() {
        let (url, server) = serve_once("429 Too Many Requests", r#"{"error":"slow down"}"#);
        let p = HttpProvider::from_lookup(env(&[(ENV_API_KEY, "k"), (ENV_MODEL, "m"), (ENV_BASE_URL, &url)])).unwrap();
        let err = p.complete("hi").unwrap_err();
        assert!(err.0.contains("429") && err.0.contains("slow down"), "{err}");
        server.join().unwrap();
    }

    #[test]
    fn replay_file_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        let hash = m2v_core::bridge::prompt_sha256("p");
        std::fs::write(&path, format!("{{\"prompt_sha256\":\"{}\",\"response\":\"r\"}}\n", hash.to_uppercase())).unwrap();
        let replay = load_replay(&path).unwrap();
        assert_eq!(replay.complete("p").unwrap(), "r");
        assert!(replay.complete("q").is_err());

        std::fs::write(&path, "{\"prompt_sha256\":\"abc\",\"response\":\"r\"}\n").unwrap();
        assert!(matches!(load_replay(&path), Err(ConfigError::ReplayEntry { line: 1, .. })));
        let twice = format!("{{\"prompt_sha256\":\"{hash}\",\"response\":\"r\"}}\n").repeat(2);
        std::fs::write(&path, twice).unwrap();
        assert!(matches!(load_replay(&path), Err(ConfigError::ReplayEntry { line: 2, .. })));
    }
}
