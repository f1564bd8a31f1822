//! Uniform text-generation interface with token log-probabilities.

mod http;
mod scripted;

pub use http::HttpBackend;
pub use scripted::{ScriptRule, ScriptResponse, ScriptedBackend};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{PromptRender, Role};

/// Parameters for a single generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub stop_sequences: Vec<String>,
    /// Distinguishes repeated draws from the same prompt.
    pub sample_index: usize,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_new_tokens: 1024,
            stop_sequences: Vec::new(),
            sample_index: 0,
            seed: 0,
        }
    }
}

/// Why a generation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopToken,
    StopSequence,
    LengthLimit,
}

/// One generated token with its natural-log probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub logprob: f64,
}

/// A completed generation: text, per-token logprobs, stop reason.
/// Invariant: concatenating the token texts yields `text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens: Vec<Token>,
    pub stopped_on: StopReason,
}

impl Completion {
    /// Mean token log-probability, None for an empty completion.
    pub fn mean_logprob(&self) -> Option<f64> {
        if self.tokens.is_empty() {
            return None;
        }
        Some(self.tokens.iter().map(|t| t.logprob).sum::<f64>() / self.tokens.len() as f64)
    }
}

/// Backend selection and connection settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Path of the scripted fixture file (scripted kind only).
    #[serde(default)]
    pub script_path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Http,
}

fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> usize {
    3
}
fn default_backoff_ms() -> u64 {
    100
}
fn default_max_in_flight() -> usize {
    4
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            base_url: String::new(),
            model_name: String::new(),
            api_key_env: String::new(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_ms(),
            max_in_flight: default_max_in_flight(),
            script_path: String::new(),
        }
    }
}

/// A text-completion backend that continues the final assistant-prefix
/// turn of a rendered prompt and reports per-token logprobs.
pub trait LlmBackend: Send + Sync {
    fn generate(&self, render: &PromptRender, params: &GenerationParams) -> Result<Completion>;
}

/// Role markers for flattening turns into a raw completion prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatTemplateSpec {
    pub user_prefix: String,
    pub user_suffix: String,
    pub assistant_prefix: String,
    /// Appended after *closed* assistant turns only; a continuation
    /// prefix is left open so the server continues it.
    pub assistant_suffix: String,
    pub supports_continuation: bool,
}

impl Default for ChatTemplateSpec {
    fn default() -> Self {
        // The trivial display form: "User: ...\nAssistant: ..."
        ChatTemplateSpec {
            user_prefix: "User: ".to_string(),
            user_suffix: "\n".to_string(),
            assistant_prefix: "Assistant: ".to_string(),
            assistant_suffix: "\n".to_string(),
            supports_continuation: true,
        }
    }
}

/// Flatten a turn sequence into a raw prompt string. The final
/// continuation-prefix turn is emitted without its end-of-turn marker so
/// the server continues it.
pub fn render_to_wire(render: &PromptRender, template: &ChatTemplateSpec) -> Result<String> {
    if render.turns.is_empty() {
        return Err(Error::invalid_input("turn list must be non-empty"));
    }
    let mut out = String::new();
    for turn in &render.turns {
        match turn.role {
            Role::User => {
                out.push_str(&template.user_prefix);
                out.push_str(&turn.content);
                out.push_str(&template.user_suffix);
            }
            Role::Assistant => {
                out.push_str(&template.assistant_prefix);
                out.push_str(&turn.content);
                if turn.is_continuation_prefix {
                    if !template.supports_continuation {
                        return Err(Error::Capability(
                            "chat template does not support assistant-prefix continuation".into(),
                        ));
                    }
                } else {
                    out.push_str(&template.assistant_suffix);
                }
            }
        }
    }
    Ok(out)
}

/// Build a backend from config.
pub fn make_backend(config: &BackendConfig) -> Result<Box<dyn LlmBackend>> {
    match config.kind {
        BackendKind::Scripted => {
            if config.script_path.is_empty() {
                return Err(Error::Config("scripted backend requires script_path".into()));
            }
            Ok(Box::new(ScriptedBackend::from_file(&config.script_path)?))
        }
        BackendKind::Http => Ok(Box::new(HttpBackend::new(config.clone())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{render_generation_prompt, PromptStyle};

    #[test]
    fn wire_matches_display_form() {
        let render = render_generation_prompt(PromptStyle::Base, "What is 2+2?").unwrap();
        let wire = render_to_wire(&render, &ChatTemplateSpec::default()).unwrap();
        assert_eq!(wire, "User: Q: What is 2+2?\nAssistant: A:");
    }

    #[test]
    fn wire_contains_question_once() {
        for style in [PromptStyle::Cot, PromptStyle::CotStep, PromptStyle::TabCot] {
            let render = render_generation_prompt(style, "unique question marker").unwrap();
            let wire = render_to_wire(&render, &ChatTemplateSpec::default()).unwrap();
            assert_eq!(wire.matches("unique question marker").count(), 1);
        }
    }

    #[test]
    fn empty_turns_rejected() {
        let render = PromptRender {
            turns: vec![],
            style_tag: "x".into(),
        };
        assert!(render_to_wire(&render, &ChatTemplateSpec::default()).is_err());
    }

    #[test]
    fn continuation_unsupported_is_capability_error() {
        let render = render_generation_prompt(PromptStyle::Base, "q").unwrap();
        let template = ChatTemplateSpec {
            supports_continuation: false,
            ..ChatTemplateSpec::default()
        };
        match render_to_wire(&render, &template) {
            Err(Error::Capability(_)) => {}
            other => panic!("expected capability error, got {other:?}"),
        }
    }
}
