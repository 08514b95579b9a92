//! Text client for an OpenAI-compatible chat-completions endpoint.

use std::time::Duration;

use notebar_core::forge::client::implied_score;
use notebar_core::forge::{ClientError, StubClient, TextClient};
use notebar_core::CanonicalScores;
use serde_json::{json, Value};

use crate::config::ClientSettings;

pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(settings: &ClientSettings) -> Result<Self, ClientError> {
        let endpoint = settings
            .endpoint
            .clone()
            .ok_or_else(|| ClientError::Config("no endpoint configured".into()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(HttpClient {
            endpoint,
            api_key: std::env::var(&settings.api_key_env).ok(),
            model: settings.model.clone(),
            http,
        })
    }
}

/// `choices[0].message.content` of a chat-completions response.
pub fn extract_content(body: &Value) -> Result<String, ClientError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::Malformed("response has no choices[0].message.content".into()))
}

/// First number in `text`, if it lies in `[0, 1]`.
pub fn parse_unit_number(text: &str) -> Option<f64> {
    text.split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .filter(|t| !t.is_empty())
        .find_map(|t| t.trim_matches('.').parse::<f64>().ok())
        .filter(|v| (0.0..=1.0).contains(v))
}

impl TextClient for HttpClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let mut req = self.http.post(&self.endpoint).json(&json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": 0,
        }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ClientError::Status(status.as_u16()));
        }
        let body: Value = resp.json().map_err(|e| ClientError::Malformed(e.to_string()))?;
        extract_content(&body)
    }

    fn score_consistency(&self, analysis: &str, scores: &CanonicalScores) -> Result<f64, ClientError> {
        let prompt = format!(
            "Rate from 0 to 1 the overall intensity that this analysis implies across telos, logos, ethos, \
             pathos and kairos. Reply with one number only.\n\n{analysis}"
        );
        match parse_unit_number(&self.complete(&prompt)?) {
            Some(v) => Ok(v),
            None => Ok(implied_score(analysis).unwrap_or_else(|| scores.mean())),
        }
    }
}

/// The configured remote client, or the deterministic stub when no endpoint
/// is set.
pub fn client_from(settings: &ClientSettings) -> Result<Box<dyn TextClient>, ClientError> {
    match settings.endpoint {
        Some(_) => Ok(Box::new(HttpClient::new(settings)?)),
        None => Ok(Box::new(StubClient::new(settings.seed))),
    }
}
