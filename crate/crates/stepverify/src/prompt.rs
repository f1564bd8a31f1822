//! Rendering of the five generation prompt styles and the two
//! verification prompt variants into backend-ready turn sequences.
//!
//! Rendering is pure: identical inputs produce byte-identical output.

use serde::{Deserialize, Serialize};

use crate::backend::GenerationParams;
use crate::error::{Error, Result};

/// Role of a conversational turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// One conversational turn. A turn flagged `is_continuation_prefix` is a
/// final assistant turn whose content the backend must continue rather
/// than answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
    pub is_continuation_prefix: bool,
}

impl ChatTurn {
    pub fn user(content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::User,
            content: content.into(),
            is_continuation_prefix: false,
        }
    }

    pub fn assistant_prefix(content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::Assistant,
            content: content.into(),
            is_continuation_prefix: true,
        }
    }
}

/// The five zero-shot generation prompt styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    Base,
    Cot,
    PsPlus,
    TabCot,
    CotStep,
}

impl PromptStyle {
    pub fn tag(&self) -> &'static str {
        match self {
            PromptStyle::Base => "base",
            PromptStyle::Cot => "cot",
            PromptStyle::PsPlus => "ps-plus",
            PromptStyle::TabCot => "tab-cot",
            PromptStyle::CotStep => "cot-step",
        }
    }
}

impl std::str::FromStr for PromptStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(PromptStyle::Base),
            "cot" => Ok(PromptStyle::Cot),
            "ps-plus" | "ps+" => Ok(PromptStyle::PsPlus),
            "tab-cot" => Ok(PromptStyle::TabCot),
            "cot-step" => Ok(PromptStyle::CotStep),
            other => Err(Error::invalid_input(format!("unknown prompt style: {other}"))),
        }
    }
}

/// The two verification prompt variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifierVariant {
    #[serde(alias = "r")]
    RPrompt,
    #[serde(alias = "cotr")]
    CotrPrompt,
}

impl std::str::FromStr for VerifierVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" | "r-prompt" => Ok(VerifierVariant::RPrompt),
            "cotr" | "cotr-prompt" => Ok(VerifierVariant::CotrPrompt),
            other => Err(Error::invalid_input(format!("unknown verifier variant: {other}"))),
        }
    }
}

/// An ordered turn sequence ready to be sent to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRender {
    pub turns: Vec<ChatTurn>,
    pub style_tag: String,
}

const PS_PLUS_PREFIX: &str = "A: Let's first understand the problem, extract relevant variables and their corresponding numerals, and devise a plan. Then, let's carry out the plan, calculate intermediate variables (pay attention to correct numeral calculation and commonsense), solve the problem step by step, and show the answer.";

/// Render the generation prompt for one question in the given style.
pub fn render_generation_prompt(style: PromptStyle, question: &str) -> Result<PromptRender> {
    if question.is_empty() {
        return Err(Error::invalid_input("question must be non-empty"));
    }
    let prefix = match style {
        PromptStyle::Base => "A:".to_string(),
        PromptStyle::Cot => "Let's think step by step.".to_string(),
        PromptStyle::PsPlus => PS_PLUS_PREFIX.to_string(),
        PromptStyle::TabCot => "A: \n| step | subquestion | process | result\n".to_string(),
        PromptStyle::CotStep => "A: Let's think step by step.\n\nStep 1: ".to_string(),
    };
    Ok(PromptRender {
        turns: vec![
            ChatTurn::user(format!("Q: {question}")),
            ChatTurn::assistant_prefix(prefix),
        ],
        style_tag: style.tag().to_string(),
    })
}

/// Render the step verification prompt for `target_index` (1-based)
/// within the chain prefix `steps[..target_index]`.
pub fn render_verification_prompt(
    variant: VerifierVariant,
    question: &str,
    steps: &[String],
    target_index: usize,
) -> Result<PromptRender> {
    if target_index == 0 || target_index > steps.len() {
        return Err(Error::invalid_input(format!(
            "target_index {target_index} out of range for {} steps",
            steps.len()
        )));
    }
    let chain = steps[..target_index]
        .iter()
        .enumerate()
        .map(|(i, s)| format!("STEP {}: {}", i + 1, s))
        .collect::<Vec<_>>()
        .join("\n\n");
    let user = format!(
        "Here is a question:\n\n{question}\n\nFor the given question, here is a (potentially partial) reasoning process:\n\n{chain}\n\nDouble-check the last reasoning step (STEP {target_index}), let's analyze its correctness to choose the correct option for the following question.\n\nQuestion: Is the last solution (in STEP {target_index}) correct?\n\n(A) Yes\n\n(B) No"
    );
    let (prefix, tag) = match variant {
        VerifierVariant::RPrompt => ("Answer: (".to_string(), "r-prompt"),
        VerifierVariant::CotrPrompt => (
            "Answer: Let's double-check step by step.\n".to_string(),
            "cotr-prompt",
        ),
    };
    Ok(PromptRender {
        turns: vec![ChatTurn::user(user), ChatTurn::assistant_prefix(prefix)],
        style_tag: tag.to_string(),
    })
}

/// Contexts carrying distinct default generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationContext {
    /// Single reasoning chain generation.
    ReasoningSample,
    /// R-prompt verification: the response is just the option letter.
    RVerify,
    /// COTR-prompt verification: the response reasons before answering.
    CotrVerify,
    /// Self-consistency sampling.
    ScSample,
}

/// Default generation parameters per context. All values can be
/// overridden by config afterwards.
pub fn default_generation_params(context: GenerationContext) -> GenerationParams {
    match context {
        GenerationContext::ReasoningSample => GenerationParams {
            temperature: 0.0,
            max_new_tokens: 1024,
            ..GenerationParams::default()
        },
        GenerationContext::RVerify => GenerationParams {
            temperature: 0.0,
            max_new_tokens: 2,
            ..GenerationParams::default()
        },
        GenerationContext::CotrVerify => GenerationParams {
            temperature: 0.0,
            max_new_tokens: 512,
            ..GenerationParams::default()
        },
        GenerationContext::ScSample => GenerationParams {
            temperature: 0.8,
            max_new_tokens: 1024,
            ..GenerationParams::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cot_prompt_matches_template() {
        let r = render_generation_prompt(PromptStyle::Cot, "What is 2+2?").unwrap();
        assert_eq!(r.turns.len(), 2);
        assert_eq!(r.turns[0].content, "Q: What is 2+2?");
        assert_eq!(r.turns[1].content, "Let's think step by step.");
        assert!(r.turns[1].is_continuation_prefix);
    }

    #[test]
    fn base_prompt_matches_template() {
        let r = render_generation_prompt(PromptStyle::Base, "What is 2+2?").unwrap();
        assert_eq!(r.turns[1].content, "A:");
    }

    #[test]
    fn cot_step_prefix_ends_with_step_one() {
        let r = render_generation_prompt(PromptStyle::CotStep, "x?").unwrap();
        assert!(r.turns[1].content.ends_with("Step 1: "));
    }

    #[test]
    fn tab_cot_prefix_has_header_row() {
        let r = render_generation_prompt(PromptStyle::TabCot, "x?").unwrap();
        assert_eq!(r.turns[1].content, "A: \n| step | subquestion | process | result\n");
    }

    #[test]
    fn empty_question_rejected() {
        assert!(render_generation_prompt(PromptStyle::Cot, "").is_err());
    }

    #[test]
    fn question_appears_exactly_once() {
        for style in [
            PromptStyle::Base,
            PromptStyle::Cot,
            PromptStyle::PsPlus,
            PromptStyle::TabCot,
            PromptStyle::CotStep,
        ] {
            let r = render_generation_prompt(style, "a very unique question?").unwrap();
            let combined: String = r.turns.iter().map(|t| t.content.as_str()).collect();
            assert_eq!(combined.matches("a very unique question?").count(), 1);
        }
    }

    #[test]
    fn verification_prompt_fills_template() {
        let steps = vec!["a".to_string(), "b".to_string()];
        let r = render_verification_prompt(VerifierVariant::RPrompt, "q", &steps, 2).unwrap();
        let user = &r.turns[0].content;
        assert_eq!(user.matches("STEP 2").count(), 3); // chain line + two [NUMBER] slots
        assert!(user.contains("(A) Yes"));
        assert!(user.contains("(B) No"));
        assert!(user.contains("STEP 1: a"));
        assert!(user.contains("STEP 2: b"));
        assert!(r.turns[1].content.ends_with('('));
    }

    #[test]
    fn cotr_prompt_prefix() {
        let steps = vec!["a".to_string()];
        let r = render_verification_prompt(VerifierVariant::CotrPrompt, "q", &steps, 1).unwrap();
        assert_eq!(r.turns[1].content, "Answer: Let's double-check step by step.\n");
    }

    #[test]
    fn verification_index_out_of_range() {
        let steps = vec!["a".to_string()];
        assert!(render_verification_prompt(VerifierVariant::RPrompt, "q", &steps, 2).is_err());
        assert!(render_verification_prompt(VerifierVariant::RPrompt, "q", &steps, 0).is_err());
    }

    #[test]
    fn step_round_trip_from_rendered_prompt() {
        let steps: Vec<String> = vec!["first step".into(), "second step".into(), "third".into()];
        let r = render_verification_prompt(VerifierVariant::RPrompt, "q", &steps, 3).unwrap();
        let user = &r.turns[0].content;
        let chain_start = user.find("STEP 1: ").unwrap();
        let chain_end = user.find("\n\nDouble-check").unwrap();
        let chain = &user[chain_start..chain_end];
        let re = regex::Regex::new(r"(?m)^STEP \d+: ").unwrap();
        let extracted: Vec<String> = re
            .split(chain)
            .filter(|s| !s.is_empty())
            .map(|s| s.trim_end().to_string())
            .collect();
        assert_eq!(extracted, steps);
    }

    #[test]
    fn default_params_per_context() {
        assert_eq!(default_generation_params(GenerationContext::RVerify).max_new_tokens, 2);
        assert_eq!(default_generation_params(GenerationContext::CotrVerify).max_new_tokens, 512);
        assert_eq!(default_generation_params(GenerationContext::ScSample).temperature, 0.8);
    }
}
