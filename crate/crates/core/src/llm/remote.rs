//! Minimal text-completion HTTP backend.
//!
//! Wire contract (JSON over `POST <endpoint>`):
//!
//! ```text
//! request:  {"model": "...", "prompt": "...", "temperature": 1.0, "max_output_tokens": 4096}
//! response: {"text": "...", "usage": {"input_tokens": 123, "output_tokens": 45}}
//! ```
//!
//! `usage` is optional; when absent the word-count proxy is used. The API key
//! is read from the environment variable named in the config and sent as
//! `Authorization: Bearer <key>`. Connection failures, 429 and 5xx answers
//! are retried with exponential backoff; other 4xx answers are protocol
//! errors.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, BackendError, GenerationRequest, GenerationResponse, UsageRecord};

pub const DEFAULT_API_KEY_ENV: &str = "EVOPLAN_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    /// Extra attempts after a transport failure.
    pub transport_retries: u32,
    pub timeout_secs: u64,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/complete".to_owned(),
            model: "gemini-1.5-flash".to_owned(),
            api_key_env: DEFAULT_API_KEY_ENV.to_owned(),
            transport_retries: 3,
            timeout_secs: 300,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_output_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct WireUsage {
    input_tokens: u64,
    output_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    text: String,
    #[serde(default)]
    usage: Option<WireUsage>,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
        }
    }

    fn attempt(&self, body: &WireRequest<'_>) -> Result<WireResponse, (bool, BackendError)> {
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(body)
            .map_err(|e| (true, BackendError::Transport(e.to_string())))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err((true, BackendError::Transport(format!("HTTP {status}"))));
        }
        if status >= 400 {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Err((false, BackendError::Protocol(format!("HTTP {status}: {detail}"))));
        }
        response
            .body_mut()
            .read_json::<WireResponse>()
            .map_err(|e| (false, BackendError::Protocol(e.to_string())))
    }
}

impl Backend for RemoteBackend {
    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let body = WireRequest {
            model: &self.config.model,
            prompt: &request.prompt,
            temperature: request.temperature,
            max_output_tokens: request.max_output_tokens,
        };
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut tries = 0;
        let reply = loop {
            match self.attempt(&body) {
                Ok(reply) => break reply,
                Err((retryable, err)) => {
                    if !retryable || tries >= self.config.transport_retries {
                        return Err(err);
                    }
                    log::warn!("remote call failed ({err}), retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    tries += 1;
                }
            }
        };
        let usage = match reply.usage {
            Some(u) => UsageRecord::new(u.input_tokens, u.output_tokens, &self.config.model),
            None => UsageRecord::new(
                estimate_tokens(&request.prompt),
                estimate_tokens(&reply.text),
                &self.config.model,
            ),
        };
        Ok(GenerationResponse {
            text: reply.text,
            usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    use super::*;
    use crate::candidate::Birth;
    use crate::llm::{Purpose, RequestTag};

    /// Serves the given (status, body) answers in order, one per connection,
    /// and forwards each received request (headers and body) to the channel.
    fn stub(answers: Vec<(u16, String)>) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in answers {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut headers = String::new();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut payload = vec![0; length];
                reader.read_exact(&mut payload).unwrap();
                tx.send((headers, String::from_utf8(payload).unwrap())).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1/complete"), rx)
    }

    fn request(prompt: &str) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.into(),
            temperature: 0.7,
            max_output_tokens: 64,
            tag: RequestTag {
                run_id: "r".into(),
                birth: Birth {
                    generation: 1,
                    island: 1,
                    conversation: 1,
                    turn: 1,
                },
                attempt: 1,
                purpose: Purpose::Propose,
            },
        }
    }

    fn config(endpoint: String, key_env: &str) -> RemoteConfig {
        RemoteConfig {
            endpoint,
            model: "gemini-1.5-pro".into(),
            api_key_env: key_env.into(),
            transport_retries: 2,
            timeout_secs: 10,
            backoff_ms: 1,
        }
    }

    #[test]
    fn retries_server_errors_and_reads_usage() {
        let (endpoint, seen) = stub(vec![
            (503, "{}".into()),
            (200, r#"{"text":"hello","usage":{"input_tokens":11,"output_tokens":3}}"#.into()),
        ]);
        std::env::set_var("EVOPLAN_TEST_KEY_A", "sekret");
        let backend = RemoteBackend::new(config(endpoint, "EVOPLAN_TEST_KEY_A"));
        let reply = backend.complete(&request("plan a trip")).unwrap();
        assert_eq!(reply.text, "hello");
        assert_eq!(reply.usage, UsageRecord::new(11, 3, "gemini-1.5-pro"));

        let (_, first_body) = seen.recv().unwrap();
        let (headers, body) = seen.recv().unwrap();
        assert_eq!(first_body, body);
        assert!(headers.to_ascii_lowercase().contains("authorization: bearer sekret"));
        let sent: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(sent["model"], "gemini-1.5-pro");
        assert_eq!(sent["prompt"], "plan a trip");
        assert_eq!(sent["max_output_tokens"], 64);
    }

    #[test]
    fn missing_usage_falls_back_to_estimate() {
        let (endpoint, _seen) = stub(vec![(200, r#"{"text":"one two three"}"#.into())]);
        let backend = RemoteBackend::new(config(endpoint, "EVOPLAN_TEST_KEY_UNSET"));
        let reply = backend.complete(&request("a b c d e f")).unwrap();
        assert_eq!((reply.usage.input_tokens, reply.usage.output_tokens), (8, 4));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (endpoint, seen) = stub(vec![(400, "bad".into()), (200, r#"{"text":"late"}"#.into())]);
        let backend = RemoteBackend::new(config(endpoint, "EVOPLAN_TEST_KEY_UNSET"));
        let err = backend.complete(&request("p")).unwrap_err();
        assert!(matches!(err, BackendError::Protocol(ref m) if m.contains("400")));
        assert!(seen.recv().is_ok());
        assert!(seen.try_recv().is_err());
    }

    #[test]
    fn malformed_body_is_a_protocol_error() {
        let (endpoint, _seen) = stub(vec![(200, r#"{"txt":"x"}"#.into())]);
        let backend = RemoteBackend::new(config(endpoint, "EVOPLAN_TEST_KEY_UNSET"));
        assert!(matches!(
            backend.complete(&request("p")),
            Err(BackendError::Protocol(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut cfg = config(format!("http://{addr}/x"), "EVOPLAN_TEST_KEY_UNSET");
        cfg.transport_retries = 0;
        let backend = RemoteBackend::new(cfg);
        let err = backend.complete(&request("p")).unwrap_err();
        assert!(matches!(err, BackendError::Transport(_)));
        assert!(!err.is_fatal());
    }
}
