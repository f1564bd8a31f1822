//! Per-step self-verification and chain-level correctness
//! classification.

use serde::{Deserialize, Serialize};

use crate::backend::{GenerationParams, LlmBackend};
use crate::error::{Error, Result};
use crate::parse::{ExtractedAnswer, Prediction};
use crate::prompt::{
    default_generation_params, render_verification_prompt, GenerationContext,
    VerifierVariant,
};
use crate::score::{step_generation_score, unify_score, verification_score};
use crate::Score;

/// One generated reasoning step with its generation confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    /// 1-based step index within its chain.
    pub index: usize,
    pub text: String,
    pub token_logprobs: Vec<Score>,
    /// Mean token log-probability (s_C1), set once computed.
    pub s_c1: Option<Score>,
}

impl ReasoningStep {
    pub fn new(index: usize, text: impl Into<String>, token_logprobs: Vec<Score>) -> Self {
        let s_c1 = step_generation_score(&token_logprobs).ok();
        ReasoningStep {
            index,
            text: text.into(),
            token_logprobs,
            s_c1,
        }
    }
}

/// The verification score triple attached to a verified step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierScore {
    pub prediction: Prediction,
    /// Mean token log-prob of the verification response.
    pub s_hat_c2: Score,
    pub s_c2: Score,
    pub s_f: Score,
}

/// A question plus ordered steps, extracted answer, and optional scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub question_id: String,
    pub question: String,
    pub steps: Vec<ReasoningStep>,
    pub verifier_scores: Option<Vec<VerifierScore>>,
    pub answer: ExtractedAnswer,
    pub chain_score: Option<Score>,
}

impl ReasoningChain {
    pub fn step_texts(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.text.clone()).collect()
    }

    /// All step texts joined back into one chain text.
    pub fn chain_text(&self) -> String {
        self.step_texts().join("\n\n")
    }
}

/// Scoring configuration for the verifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// false = score from verification only (ablation).
    #[serde(default = "default_use_c1")]
    pub use_c1: bool,
    #[serde(default = "default_clamp_epsilon")]
    pub clamp_epsilon: Score,
    #[serde(default = "default_verifier_variant")]
    pub verifier_variant: VerifierVariant,
    /// When true, the COTR response's mean logprob is taken only over
    /// the tokens after its final "Answer" marker; default is the whole
    /// response.
    #[serde(default)]
    pub answer_tokens_only: bool,
}

fn default_use_c1() -> bool {
    true
}
fn default_clamp_epsilon() -> Score {
    1e-12
}
fn default_verifier_variant() -> VerifierVariant {
    VerifierVariant::CotrPrompt
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            use_c1: default_use_c1(),
            clamp_epsilon: default_clamp_epsilon(),
            verifier_variant: default_verifier_variant(),
            answer_tokens_only: false,
        }
    }
}

impl ScoringConfig {
    pub fn verification_params(&self) -> GenerationParams {
        match self.verifier_variant {
            VerifierVariant::RPrompt => default_generation_params(GenerationContext::RVerify),
            VerifierVariant::CotrPrompt => default_generation_params(GenerationContext::CotrVerify),
        }
    }
}

fn response_mean_logprob(
    completion: &crate::backend::Completion,
    answer_tokens_only: bool,
) -> Option<Score> {
    if !answer_tokens_only {
        return completion.mean_logprob();
    }
    // Average only over tokens at or after the last "Answer" marker.
    let marker = completion.text.rfind("Answer")?;
    let mut offset = 0;
    let mut tail = Vec::new();
    for t in &completion.tokens {
        if offset + t.text.len() > marker {
            tail.push(t.logprob);
        }
        offset += t.text.len();
    }
    if tail.is_empty() {
        completion.mean_logprob()
    } else {
        Some(tail.iter().sum::<Score>() / tail.len() as Score)
    }
}

/// Verify the step at `target_index` (1-based) of the chain prefix
/// `steps[..target_index]`, returning the full score triple.
pub fn verify_step(
    backend: &dyn LlmBackend,
    question: &str,
    steps: &[String],
    target_index: usize,
    config: &ScoringConfig,
    s_c1: Score,
) -> Result<VerifierScore> {
    let render =
        render_verification_prompt(config.verifier_variant, question, steps, target_index)?;
    let params = config.verification_params();
    let completion = backend.generate(&render, &params)?;

    let (prediction, s_hat_c2) =
        match response_mean_logprob(&completion, config.answer_tokens_only) {
            Some(mean) => (
                crate::parse::extract_verification_prediction(&completion.text),
                mean.min(0.0),
            ),
            None => {
                log::warn!(
                    "empty verification response for step {target_index}; treating as incorrect"
                );
                (Prediction::Incorrect, (0.5 as Score).ln())
            }
        };
    let s_c2 = verification_score(prediction, s_hat_c2, config.clamp_epsilon)?;
    let s_f = unify_score(s_c1, s_c2, config.use_c1);
    Ok(VerifierScore {
        prediction,
        s_hat_c2,
        s_c2,
        s_f,
    })
}

/// Verify every step of the chain in order, attaching scores and the
/// chain score. Steps without a computed s_c1 score are treated as
/// probability-1 generations.
pub fn verify_chain(
    backend: &dyn LlmBackend,
    chain: &mut ReasoningChain,
    config: &ScoringConfig,
) -> Result<()> {
    let texts = chain.step_texts();
    let mut scores = Vec::with_capacity(texts.len());
    for (i, step) in chain.steps.iter().enumerate() {
        let s_c1 = step.s_c1.unwrap_or(0.0);
        scores.push(verify_step(backend, &chain.question, &texts, i + 1, config, s_c1)?);
    }
    chain.chain_score = Some(scores.iter().map(|s| s.s_f).sum());
    chain.verifier_scores = Some(scores);
    Ok(())
}

/// Chain-level correctness classification: 1 iff every step-level
/// verification predicts correct. With `short_circuit`, stops at the
/// first incorrect step (same class output).
pub fn classify_chain(
    backend: &dyn LlmBackend,
    chain: &ReasoningChain,
    config: &ScoringConfig,
    short_circuit: bool,
) -> Result<u8> {
    if chain.steps.is_empty() {
        return Err(Error::invalid_input("chain must have at least one step"));
    }
    let texts = chain.step_texts();
    let mut all_correct = true;
    for i in 1..=texts.len() {
        let s_c1 = chain.steps[i - 1].s_c1.unwrap_or(0.0);
        let score = verify_step(backend, &chain.question, &texts, i, config, s_c1)?;
        if score.prediction == Prediction::Incorrect {
            all_correct = false;
            if short_circuit {
                break;
            }
        }
    }
    Ok(u8::from(all_correct))
}

/// Chain score: sum of the per-step unified scores.
pub fn chain_score(chain: &ReasoningChain) -> Result<Score> {
    let scores = chain
        .verifier_scores
        .as_ref()
        .ok_or_else(|| Error::invalid_state("chain has no verifier scores"))?;
    if scores.len() != chain.steps.len() {
        return Err(Error::invalid_state(
            "verifier scores do not cover every step",
        ));
    }
    Ok(scores.iter().map(|s| s.s_f).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptResponse, ScriptRule, ScriptedBackend, StopReason};

    fn verifier_script(replies: &[(&str, Vec<f64>)]) -> ScriptedBackend {
        // One rule keyed on the Fig-1 phrasing; responses cycle by
        // sample_index, so single-call tests just use the first.
        ScriptedBackend::new(
            replies
                .iter()
                .enumerate()
                .map(|(i, (text, lps))| ScriptRule {
                    pattern: format!("(in STEP {})", i + 1),
                    responses: vec![ScriptResponse {
                        text: text.to_string(),
                        token_logprobs: lps.clone(),
                        stopped_on: StopReason::StopToken,
                    }],
                })
                .collect(),
        )
    }

    fn chain_of(steps: &[&str]) -> ReasoningChain {
        ReasoningChain {
            question_id: "q1".into(),
            question: "q".into(),
            steps: steps
                .iter()
                .enumerate()
                .map(|(i, t)| ReasoningStep::new(i + 1, *t, vec![-0.1]))
                .collect(),
            verifier_scores: None,
            answer: ExtractedAnswer::none(),
            chain_score: None,
        }
    }

    #[test]
    fn verify_step_affirmative_path() {
        // Frozen composition: s_hat = mean(-0.1, -0.3) = -0.2,
        // prediction correct so s_c2 = -0.2, s_f = exp(-0.2).
        let backend = verifier_script(&[("A)", vec![-0.1, -0.3])]);
        let steps = vec!["a step".to_string()];
        let score = verify_step(&backend, "q", &steps, 1, &ScoringConfig::default(), -0.2).unwrap();
        assert_eq!(score.prediction, Prediction::Correct);
        assert!((score.s_hat_c2 - (-0.2)).abs() < 1e-12);
        assert!((score.s_c2 - (-0.2)).abs() < 1e-12);
        assert!((score.s_f - (-0.2f64).exp()).abs() < 1e-12);
        assert!((score.s_f - 0.8187307530779818).abs() < 1e-7);
    }

    #[test]
    fn verify_step_negative_at_symmetry_point() {
        let backend = verifier_script(&[("B)", vec![0.5f64.ln()])]);
        let steps = vec!["a step".to_string()];
        let score = verify_step(&backend, "q", &steps, 1, &ScoringConfig::default(), -0.2).unwrap();
        assert_eq!(score.prediction, Prediction::Incorrect);
        assert!((score.s_c2 - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_response_is_incorrect_at_half() {
        let backend = verifier_script(&[("", vec![])]);
        let steps = vec!["a step".to_string()];
        let score = verify_step(&backend, "q", &steps, 1, &ScoringConfig::default(), 0.0).unwrap();
        assert_eq!(score.prediction, Prediction::Incorrect);
        assert!((score.s_hat_c2 - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn classify_all_correct() {
        let backend = verifier_script(&[
            ("A) Yes", vec![-0.1]),
            ("A) Yes", vec![-0.1]),
            ("A) Yes", vec![-0.1]),
        ]);
        let chain = chain_of(&["s1", "s2", "s3"]);
        assert_eq!(classify_chain(&backend, &chain, &ScoringConfig::default(), false).unwrap(), 1);
    }

    #[test]
    fn classify_any_incorrect_is_zero_both_modes() {
        let backend = verifier_script(&[
            ("A) Yes", vec![-0.1]),
            ("B) No", vec![-0.1]),
            ("A) Yes", vec![-0.1]),
        ]);
        let chain = chain_of(&["s1", "s2", "s3"]);
        let full = classify_chain(&backend, &chain, &ScoringConfig::default(), false).unwrap();
        let short = classify_chain(&backend, &chain, &ScoringConfig::default(), true).unwrap();
        assert_eq!(full, 0);
        assert_eq!(short, 0);
    }

    #[test]
    fn classify_empty_chain_rejected() {
        let backend = verifier_script(&[]);
        let chain = chain_of(&[]);
        assert!(classify_chain(&backend, &chain, &ScoringConfig::default(), false).is_err());
    }

    #[test]
    fn chain_score_sums_sf() {
        let mut chain = chain_of(&["s1", "s2"]);
        chain.verifier_scores = Some(vec![
            VerifierScore {
                prediction: Prediction::Correct,
                s_hat_c2: -0.1,
                s_c2: -0.1,
                s_f: 0.5,
            },
            VerifierScore {
                prediction: Prediction::Correct,
                s_hat_c2: -0.1,
                s_c2: -0.1,
                s_f: 0.25,
            },
        ]);
        assert_eq!(chain_score(&chain).unwrap(), 0.75);
    }

    #[test]
    fn chain_score_requires_scores() {
        let chain = chain_of(&["s1"]);
        assert!(matches!(chain_score(&chain), Err(Error::InvalidState(_))));
    }

    #[test]
    fn chain_score_frozen_sum() {
        let mut chain = chain_of(&["s1", "s2"]);
        let mk = |s_f| VerifierScore {
            prediction: Prediction::Correct,
            s_hat_c2: 0.0,
            s_c2: 0.0,
            s_f,
        };
        chain.verifier_scores = Some(vec![mk(0.7408182), mk(0.8187308)]);
        assert!((chain_score(&chain).unwrap() - 1.5595490).abs() < 1e-7);
    }
}
