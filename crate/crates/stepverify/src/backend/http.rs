//! HTTP client for OpenAI-compatible completions servers.
//!
//! Targets the raw completions endpoint (`/v1/completions`) because
//! assistant-prefix continuation and token logprobs are first-class
//! there.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::backend::{
    render_to_wire, BackendConfig, ChatTemplateSpec, Completion, GenerationParams, LlmBackend,
    StopReason, Token,
};
use crate::error::{Error, Result};
use crate::prompt::PromptRender;

/// Counting semaphore bounding in-flight requests.
struct InFlightGate {
    count: Mutex<usize>,
    cond: Condvar,
    limit: usize,
}

impl InFlightGate {
    fn new(limit: usize) -> Self {
        InFlightGate {
            count: Mutex::new(0),
            cond: Condvar::new(),
            limit: limit.max(1),
        }
    }

    fn acquire(&self) {
        let mut count = self.count.lock().unwrap();
        while *count >= self.limit {
            count = self.cond.wait(count).unwrap();
        }
        *count += 1;
    }

    fn release(&self) {
        let mut count = self.count.lock().unwrap();
        *count -= 1;
        self.cond.notify_one();
    }
}

pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    template: ChatTemplateSpec,
    gate: InFlightGate,
}

#[derive(Debug, Deserialize)]
struct CompletionsResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    text: String,
    logprobs: Option<LogprobsPayload>,
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LogprobsPayload {
    tokens: Option<Vec<String>>,
    token_logprobs: Option<Vec<Option<f64>>>,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        if config.base_url.is_empty() || config.model_name.is_empty() {
            return Err(Error::Config(
                "http backend requires base_url and model_name".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::transport(e.to_string()))?;
        let gate = InFlightGate::new(config.max_in_flight);
        Ok(HttpBackend {
            client,
            template: ChatTemplateSpec::default(),
            gate,
            config,
        })
    }

    pub fn with_template(mut self, template: ChatTemplateSpec) -> Self {
        self.template = template;
        self
    }

    fn api_key(&self) -> Option<String> {
        if self.config.api_key_env.is_empty() {
            return None;
        }
        std::env::var(&self.config.api_key_env).ok()
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<CompletionsResponse> {
        let url = format!("{}/v1/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.client.post(&url).json(body);
        if let Some(key) = self.api_key() {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Error::transport(format!("server returned {status}: {text}")));
        }
        resp.json::<CompletionsResponse>()
            .map_err(|e| Error::transport(format!("malformed response body: {e}")))
    }

    fn parse_completion(&self, resp: CompletionsResponse) -> Result<Completion> {
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Error::transport("response carried no choices".to_string()))?;
        let logprobs = choice
            .logprobs
            .ok_or_else(|| Error::Capability("response missing field `logprobs`".into()))?;
        let token_texts = logprobs
            .tokens
            .ok_or_else(|| Error::Capability("response missing field `logprobs.tokens`".into()))?;
        let lps = logprobs.token_logprobs.ok_or_else(|| {
            Error::Capability("response missing field `logprobs.token_logprobs`".into())
        })?;
        if token_texts.len() != lps.len() {
            return Err(Error::transport(
                "logprobs.tokens and logprobs.token_logprobs length mismatch".to_string(),
            ));
        }
        let mut tokens: Vec<Token> = token_texts
            .into_iter()
            .zip(lps)
            .map(|(text, lp)| Token {
                text,
                // Prompt-echo entries arrive as null; treat as 0 and trim below.
                logprob: lp.unwrap_or(0.0),
            })
            .collect();
        // Some servers echo prompt tokens ahead of the generated ones;
        // keep only the suffix whose concatenation equals the choice text.
        let mut concat: String = tokens.iter().map(|t| t.text.as_str()).collect();
        while concat != choice.text && !tokens.is_empty() {
            let head = tokens.remove(0);
            concat = concat[head.text.len()..].to_string();
        }
        if concat != choice.text {
            return Err(Error::transport(
                "token texts do not reconstruct the generated text".to_string(),
            ));
        }
        let stopped_on = match choice.finish_reason.as_deref() {
            Some("length") => StopReason::LengthLimit,
            Some("stop_sequence") => StopReason::StopSequence,
            _ => StopReason::StopToken,
        };
        Ok(Completion {
            text: choice.text,
            tokens,
            stopped_on,
        })
    }
}

impl LlmBackend for HttpBackend {
    fn generate(&self, render: &PromptRender, params: &GenerationParams) -> Result<Completion> {
        let prompt = render_to_wire(render, &self.template)?;
        let mut body = json!({
            "model": self.config.model_name,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
            "logprobs": 0,
            "seed": params.seed,
        });
        if !params.stop_sequences.is_empty() {
            body["stop"] = json!(params.stop_sequences);
        }

        self.gate.acquire();
        let result = (|| {
            let mut last_err = None;
            for attempt in 0..=self.config.max_retries {
                if attempt > 0 {
                    let backoff = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
                match self.post_once(&body) {
                    Ok(resp) => return self.parse_completion(resp),
                    Err(e @ Error::Capability(_)) => return Err(e),
                    Err(e) => last_err = Some(e),
                }
            }
            Err(last_err.unwrap_or_else(|| Error::transport("request failed".to_string())))
        })();
        self.gate.release();
        result
    }
}
