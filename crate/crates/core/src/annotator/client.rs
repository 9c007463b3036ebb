use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AnnotatorError, PromptBundle};

fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_parallel() -> usize {
    4
}
fn default_delay_ms() -> u64 {
    1000
}

/// An OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub label: String,
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token. Unset or empty means
    /// no Authorization header (local servers).
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    /// First backoff delay; doubles on every retry, ±20% jitter.
    #[serde(default = "default_delay_ms")]
    pub retry_base_delay_ms: u64,
}

impl EndpointConfig {
    pub fn new(label: &str, base_url: &str, model_name: &str) -> Self {
        Self {
            label: label.into(),
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: None,
            temperature: 0.0,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_parallel_requests: default_parallel(),
            retry_base_delay_ms: default_delay_ms(),
        }
    }

    pub fn url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn api_key(&self) -> Option<String> {
        let var = self.api_key_env.as_deref().filter(|v| !v.is_empty())?;
        std::env::var(var).ok().filter(|k| !k.is_empty())
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let base = self.retry_base_delay_ms as f64 * 2f64.powi(retry as i32);
        let jitter = rng.gen_range(-0.2..=0.2);
        Duration::from_secs_f64((base * (1.0 + jitter)).max(0.0) / 1000.0)
    }
}

/// Blocking chat-completions client bound to one endpoint.
#[derive(Clone)]
pub struct ChatClient {
    endpoint: EndpointConfig,
    agent: ureq::Agent,
}

pub fn request_body(endpoint: &EndpointConfig, bundle: &PromptBundle) -> Value {
    json!({
        "model": endpoint.model_name,
        "messages": [
            {"role": "system", "content": bundle.system},
            {"role": "user", "content": bundle.user},
        ],
        "temperature": endpoint.temperature,
        "response_format": {
            "type": "json_schema",
            "json_schema": {"name": "item_annotation", "strict": true, "schema": bundle.schema},
        },
    })
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 300;
    if body.len() <= MAX {
        return body.to_string();
    }
    let mut end = MAX;
    while !body.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &body[..end])
}

impl ChatClient {
    pub fn new(endpoint: &EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoint: endpoint.clone(), agent }
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    /// One request, no retries. Returns the first choice's message content.
    pub fn send_once(&self, bundle: &PromptBundle) -> Result<String, AnnotatorError> {
        let mut req = self.agent.post(&self.endpoint.url()).header("Content-Type", "application/json");
        if let Some(key) = self.endpoint.api_key() {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(request_body(&self.endpoint, bundle)) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(AnnotatorError::Timeout(t.to_string())),
            Err(e) => return Err(AnnotatorError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(t)) => return Err(AnnotatorError::Timeout(t.to_string())),
            Err(e) => return Err(AnnotatorError::Transport(e.to_string())),
        };
        if status >= 500 {
            return Err(AnnotatorError::Server { status, body: excerpt(&body) });
        }
        if status >= 400 {
            return Err(AnnotatorError::Client { status, body: excerpt(&body) });
        }
        let value: Value =
            serde_json::from_str(&body).map_err(|e| AnnotatorError::Parse(format!("completion envelope: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| AnnotatorError::Parse("completion has no choices[0].message.content".into()))
    }

    /// Runs `attempt` until it succeeds, fails terminally, or the retry
    /// budget is spent. Returns the value and the number of attempts used.
    pub fn with_retries<T>(
        &self,
        mut attempt: impl FnMut() -> Result<T, AnnotatorError>,
    ) -> Result<(T, u32), (AnnotatorError, u32)> {
        let mut rng = rand::thread_rng();
        let mut tries = 0;
        loop {
            tries += 1;
            match attempt() {
                Ok(v) => return Ok((v, tries)),
                Err(e) if e.is_retryable() && tries <= self.endpoint.max_retries => {
                    std::thread::sleep(self.endpoint.backoff(tries - 1, &mut rng));
                }
                Err(e) => return Err((e, tries)),
            }
        }
    }
}

/// Sends one bundle with the endpoint's retry policy and returns the raw
/// message content.
pub fn request_annotation(endpoint: &EndpointConfig, bundle: &PromptBundle) -> Result<String, AnnotatorError> {
    let client = ChatClient::new(endpoint);
    client.with_retries(|| client.send_once(bundle)).map(|(v, _)| v).map_err(|(e, _)| e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn backoff_doubles_within_jitter() {
        let ep = EndpointConfig::new("x", "http://localhost", "m");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for retry in 0..4 {
            let d = ep.backoff(retry, &mut rng).as_secs_f64();
            let nominal = 2f64.powi(retry as i32);
            assert!(d >= nominal * 0.8 - 1e-9 && d <= nominal * 1.2 + 1e-9, "{d}");
        }
    }

    #[test]
    fn url_and_defaults() {
        let ep: EndpointConfig =
            serde_json::from_str(r#"{"label":"l","base_url":"http://h:8000/","model_name":"m"}"#).unwrap();
        assert_eq!(ep.url(), "http://h:8000/v1/chat/completions");
        assert_eq!(ep.temperature, 0.0);
        assert_eq!(ep.max_retries, 3);
        assert_eq!(ep.max_parallel_requests, 4);
    }

    #[test]
    fn long_bodies_are_truncated() {
        let body = "é".repeat(400);
        let e = excerpt(&body);
        assert!(e.ends_with("...") && e.len() < 310);
    }
}
