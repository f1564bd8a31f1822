//! Deterministic scripted backend for tests and offline runs.
//!
//! A script is an ordered list of rules. The first rule whose `pattern`
//! is a substring of the rendered wire text wins; `sample_index` cycles
//! through its response list. Fixture files are line-delimited JSON,
//! one rule per line.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{
    render_to_wire, ChatTemplateSpec, Completion, GenerationParams, LlmBackend, StopReason, Token,
};
use crate::error::{Error, Result};
use crate::prompt::PromptRender;

/// One canned response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptResponse {
    pub text: String,
    pub token_logprobs: Vec<f64>,
    #[serde(default = "default_stop")]
    pub stopped_on: StopReason,
}

fn default_stop() -> StopReason {
    StopReason::StopToken
}

/// One match rule: first matching rule wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Substring of the rendered wire text.
    #[serde(rename = "match")]
    pub pattern: String,
    pub responses: Vec<ScriptResponse>,
}

pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    template: ChatTemplateSpec,
}

/// Split `text` into `n` near-equal chunks on char boundaries so that
/// the chunks concatenate back to `text` exactly.
fn synthesize_tokens(text: &str, logprobs: &[f64]) -> Vec<Token> {
    let n = logprobs.len();
    if n == 0 {
        return Vec::new();
    }
    let chars: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    let total = chars.len();
    let mut tokens = Vec::with_capacity(n);
    let mut prev_byte = 0;
    for (k, lp) in logprobs.iter().enumerate() {
        let char_end = ((k + 1) * total) / n;
        let byte_end = if char_end >= total { text.len() } else { chars[char_end] };
        tokens.push(Token {
            text: text[prev_byte..byte_end].to_string(),
            logprob: *lp,
        });
        prev_byte = byte_end;
    }
    tokens
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend {
            rules,
            template: ChatTemplateSpec::default(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let reader = std::io::BufReader::new(file);
        let mut rules = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rule: ScriptRule = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            rules.push(rule);
        }
        Ok(ScriptedBackend::new(rules))
    }

    fn resolve(&self, wire: &str, sample_index: usize) -> Result<&ScriptResponse> {
        let rule = self
            .rules
            .iter()
            .find(|r| wire.contains(&r.pattern))
            .ok_or_else(|| {
                Error::invalid_state(format!(
                    "no script rule matches rendered prompt: {:?}...",
                    wire.chars().take(80).collect::<String>()
                ))
            })?;
        if rule.responses.is_empty() {
            return Err(Error::invalid_state(format!(
                "script rule {:?} has no responses",
                rule.pattern
            )));
        }
        Ok(&rule.responses[sample_index % rule.responses.len()])
    }
}

impl LlmBackend for ScriptedBackend {
    fn generate(&self, render: &PromptRender, params: &GenerationParams) -> Result<Completion> {
        let wire = render_to_wire(render, &self.template)?;
        let response = self.resolve(&wire, params.sample_index)?;
        let mut tokens = synthesize_tokens(&response.text, &response.token_logprobs);
        let mut stopped_on = response.stopped_on;

        // Stop sequences cut at the first occurrence, on a token boundary.
        let mut cut_bytes: Option<usize> = None;
        for stop in &params.stop_sequences {
            if let Some(pos) = response.text.find(stop.as_str()) {
                cut_bytes = Some(cut_bytes.map_or(pos, |c| c.min(pos)));
            }
        }
        if let Some(cut) = cut_bytes {
            let mut kept = Vec::new();
            let mut len = 0;
            for t in tokens {
                if len + t.text.len() > cut {
                    break;
                }
                len += t.text.len();
                kept.push(t);
            }
            tokens = kept;
            stopped_on = StopReason::StopSequence;
        }

        if tokens.len() > params.max_new_tokens {
            tokens.truncate(params.max_new_tokens);
            stopped_on = StopReason::LengthLimit;
        }

        let text: String = tokens.iter().map(|t| t.text.as_str()).collect();
        Ok(Completion {
            text,
            tokens,
            stopped_on,
        })
    }
}
