//! Decomposition of generated chain text into reasoning steps, final
//! answer extraction, and verification prediction extraction.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::PromptStyle;

/// One decomposed step: verbatim text plus the character span it covers
/// in the original input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Result of decomposing a chain text into steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepDecomposition {
    pub steps: Vec<StepSpan>,
    pub style: PromptStyle,
}

/// Kind of an extracted final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Numeric,
    OptionLetter,
    YesNo,
    FreeText,
    None,
}

/// Hint for which answer shape to look for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKindHint {
    Numeric,
    OptionLetter,
    YesNo,
    Auto,
}

impl std::str::FromStr for AnswerKindHint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numeric" => Ok(AnswerKindHint::Numeric),
            "option_letter" | "option-letter" => Ok(AnswerKindHint::OptionLetter),
            "yes_no" | "yes-no" => Ok(AnswerKindHint::YesNo),
            "auto" => Ok(AnswerKindHint::Auto),
            other => Err(Error::invalid_input(format!("unknown answer kind: {other}"))),
        }
    }
}

/// A final answer pulled out of a chain, in raw and canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub raw: String,
    pub canonical: String,
    pub kind: AnswerKind,
}

impl ExtractedAnswer {
    pub fn none() -> Self {
        ExtractedAnswer {
            raw: String::new(),
            canonical: String::new(),
            kind: AnswerKind::None,
        }
    }

    pub fn is_none(&self) -> bool {
        self.kind == AnswerKind::None
    }
}

fn step_marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Anchored at line starts so inline self-references like "in Step 2
    // we saw" do not split.
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*Step \d+:").unwrap())
}

fn trimmed_span(text: &str, start: usize, end: usize) -> Option<StepSpan> {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.trim_end().len();
    if trail == 0 {
        return None; // whitespace-only segment
    }
    let s = start + lead;
    let e = start + trail;
    Some(StepSpan {
        text: text[s..e].to_string(),
        start: s,
        end: e,
    })
}

/// Decompose a generated chain text into steps per prompt style.
///
/// COT STEP splits on line-anchored `Step <n>:` markers (the implicit
/// leading "Step 1: " from the prompt prefix counts as step 1). TAB COT
/// treats each non-empty table row as one step, excluding the header
/// row. All other styles split on newline runs.
pub fn decompose_steps(text: &str, style: PromptStyle) -> Result<StepDecomposition> {
    if text.is_empty() {
        return Err(Error::invalid_input("text must be non-empty"));
    }
    let steps: Vec<StepSpan> = match style {
        PromptStyle::CotStep => {
            let mut bounds: Vec<usize> = step_marker_re().find_iter(text).map(|m| m.start()).collect();
            if bounds.first() != Some(&0) {
                bounds.insert(0, 0);
            }
            bounds.push(text.len());
            bounds
                .windows(2)
                .filter_map(|w| trimmed_span(text, w[0], w[1]))
                .collect()
        }
        PromptStyle::TabCot => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .filter(|l| !is_tab_cot_header(l))
            .map(|l| {
                let start = l.as_ptr() as usize - text.as_ptr() as usize;
                trimmed_span(text, start, start + l.len())
            })
            .flatten()
            .collect(),
        _ => {
            // Newline-run splitting for the unnumbered styles: every
            // non-blank line is one step.
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .filter_map(|l| {
                    let start = l.as_ptr() as usize - text.as_ptr() as usize;
                    trimmed_span(text, start, start + l.len())
                })
                .collect()
        }
    };
    // A text with no boundary is a single-step decomposition.
    let steps = if steps.is_empty() {
        match trimmed_span(text, 0, text.len()) {
            Some(span) => vec![span],
            None => vec![StepSpan {
                text: text.to_string(),
                start: 0,
                end: text.len(),
            }],
        }
    } else {
        steps
    };
    Ok(StepDecomposition { steps, style })
}

fn is_tab_cot_header(line: &str) -> bool {
    let lower = line.to_lowercase();
    lower.contains("step") && lower.contains("subquestion")
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?[$€£]?\d[\d,]*(?:\.\d+)?").unwrap())
}

fn option_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(([A-Ea-e])\)").unwrap())
}

fn yes_no_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap())
}

fn canonical_number(raw: &str) -> String {
    let mut s: String = raw
        .chars()
        .filter(|c| !matches!(c, ',' | '$' | '€' | '£'))
        .collect();
    while s.ends_with('.') {
        s.pop();
    }
    if s.starts_with('+') {
        s.remove(0);
    }
    s.to_lowercase()
}

fn answer_cue_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)the answer is|answer:").unwrap())
}

fn extract_of_kind(segment: &str, hint: AnswerKindHint) -> Option<ExtractedAnswer> {
    match hint {
        AnswerKindHint::Numeric => number_re().find(segment).map(|m| ExtractedAnswer {
            raw: m.as_str().to_string(),
            canonical: canonical_number(m.as_str()),
            kind: AnswerKind::Numeric,
        }),
        AnswerKindHint::OptionLetter => option_re().captures(segment).map(|c| ExtractedAnswer {
            raw: c.get(0).unwrap().as_str().to_string(),
            canonical: c.get(1).unwrap().as_str().to_lowercase(),
            kind: AnswerKind::OptionLetter,
        }),
        AnswerKindHint::YesNo => yes_no_re().find(segment).map(|m| ExtractedAnswer {
            raw: m.as_str().to_string(),
            canonical: m.as_str().to_lowercase(),
            kind: AnswerKind::YesNo,
        }),
        AnswerKindHint::Auto => extract_of_kind(segment, AnswerKindHint::OptionLetter)
            .or_else(|| extract_of_kind(segment, AnswerKindHint::YesNo))
            .or_else(|| extract_of_kind(segment, AnswerKindHint::Numeric))
            .or_else(|| {
                let line = segment.lines().next()?.trim();
                if line.is_empty() {
                    None
                } else {
                    Some(ExtractedAnswer {
                        raw: line.to_string(),
                        canonical: line.trim_end_matches('.').to_lowercase(),
                        kind: AnswerKind::FreeText,
                    })
                }
            }),
    }
}

fn extract_fallback(text: &str, hint: AnswerKindHint) -> Option<ExtractedAnswer> {
    match hint {
        AnswerKindHint::Numeric => number_re().find_iter(text).last().map(|m| ExtractedAnswer {
            raw: m.as_str().to_string(),
            canonical: canonical_number(m.as_str()),
            kind: AnswerKind::Numeric,
        }),
        AnswerKindHint::OptionLetter => {
            option_re().captures_iter(text).last().map(|c| ExtractedAnswer {
                raw: c.get(0).unwrap().as_str().to_string(),
                canonical: c.get(1).unwrap().as_str().to_lowercase(),
                kind: AnswerKind::OptionLetter,
            })
        }
        AnswerKindHint::YesNo => yes_no_re().find_iter(text).last().map(|m| ExtractedAnswer {
            raw: m.as_str().to_string(),
            canonical: m.as_str().to_lowercase(),
            kind: AnswerKind::YesNo,
        }),
        AnswerKindHint::Auto => extract_fallback(text, AnswerKindHint::Numeric)
            .or_else(|| extract_fallback(text, AnswerKindHint::OptionLetter))
            .or_else(|| extract_fallback(text, AnswerKindHint::YesNo)),
    }
}

/// Extract the final answer from a chain text.
///
/// Scans for the last answer cue ("the answer is" / "answer:",
/// case-insensitive) and reads the first matching token after it;
/// without a cue, falls back to the last matching token anywhere.
/// A failed extraction yields `kind == None` rather than an error.
pub fn extract_final_answer(chain_text: &str, hint: AnswerKindHint) -> ExtractedAnswer {
    let cue_end = answer_cue_re().find_iter(chain_text).last().map(|m| m.end());
    if let Some(end) = cue_end {
        if let Some(ans) = extract_of_kind(&chain_text[end..], hint) {
            return ans;
        }
    }
    extract_fallback(chain_text, hint).unwrap_or_else(ExtractedAnswer::none)
}

/// Verification prediction of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prediction {
    Correct,
    Incorrect,
}

/// Extract the verifier's prediction: correct iff the substring "A)"
/// occurs anywhere in the response.
pub fn extract_verification_prediction(response_text: &str) -> Prediction {
    if response_text.contains("A)") {
        Prediction::Correct
    } else {
        Prediction::Incorrect
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cot_step_synthetic_fixture() {
        // Frozen from a reference regex-split of the same input.
        let d = decompose_steps("Step 1: a\n\nStep 2: b\n\nStep 3: c", PromptStyle::CotStep).unwrap();
        let texts: Vec<&str> = d.steps.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, vec!["Step 1: a", "Step 2: b", "Step 3: c"]);
    }

    #[test]
    fn cot_step_implicit_leading_step() {
        // Generation continues the prompt's "Step 1: " prefix, so the
        // leading unmarked segment is step 1.
        let d = decompose_steps("first part.\n\nStep 2: second part.", PromptStyle::CotStep).unwrap();
        assert_eq!(d.steps.len(), 2);
        assert_eq!(d.steps[0].text, "first part.");
        assert_eq!(d.steps[1].text, "Step 2: second part.");
    }

    #[test]
    fn cot_step_does_not_split_on_inline_reference() {
        let d = decompose_steps(
            "Step 1: as in Step 2: we will see\n\nStep 2: done",
            PromptStyle::CotStep,
        )
        .unwrap();
        assert_eq!(d.steps.len(), 2);
    }

    #[test]
    fn single_line_cot_is_one_step() {
        let d = decompose_steps("only one line", PromptStyle::Cot).unwrap();
        assert_eq!(d.steps.len(), 1);
        assert_eq!(d.steps[0].text, "only one line");
    }

    #[test]
    fn cot_splits_on_newline_runs() {
        let d = decompose_steps("a\n\nb\nc\n\n\nd\n", PromptStyle::Cot).unwrap();
        let texts: Vec<&str> = d.steps.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn tab_cot_rows_exclude_header() {
        let text = "| step | subquestion | process | result\n| 1 | what | 2+2 | 4 |\n| 2 | sum | 4 | 4 |\n";
        let d = decompose_steps(text, PromptStyle::TabCot).unwrap();
        assert_eq!(d.steps.len(), 2);
        assert!(d.steps[0].text.starts_with("| 1 |"));
    }

    #[test]
    fn decomposition_offsets_reconstruct_text() {
        let text = "Step 1: a\n\nStep 2: b";
        let d = decompose_steps(text, PromptStyle::CotStep).unwrap();
        for w in d.steps.windows(2) {
            assert!(w[0].end <= w[1].start);
            assert!(text[w[0].end..w[1].start].trim().is_empty());
        }
        for s in &d.steps {
            assert_eq!(&text[s.start..s.end], s.text);
        }
    }

    #[test]
    fn answer_cue_numeric() {
        let a = extract_final_answer("...Therefore, the answer is 260.", AnswerKindHint::Numeric);
        assert_eq!(a.canonical, "260");
        assert_eq!(a.kind, AnswerKind::Numeric);
    }

    #[test]
    fn numeric_fallback_strips_commas() {
        let a = extract_final_answer("...totals 1,234 cups", AnswerKindHint::Numeric);
        assert_eq!(a.canonical, "1234");
    }

    #[test]
    fn option_letter_takes_last_cue() {
        let a = extract_final_answer(
            "I pick (B) because...Therefore, the answer is (B).",
            AnswerKindHint::OptionLetter,
        );
        assert_eq!(a.canonical, "b");
    }

    #[test]
    fn currency_stripped() {
        let a = extract_final_answer("the answer is $18.", AnswerKindHint::Numeric);
        assert_eq!(a.canonical, "18");
    }

    #[test]
    fn yes_no_extraction() {
        let a = extract_final_answer("So the answer is Yes.", AnswerKindHint::YesNo);
        assert_eq!(a.canonical, "yes");
    }

    #[test]
    fn extraction_failure_is_none() {
        let a = extract_final_answer("no conclusion here", AnswerKindHint::Numeric);
        assert!(a.is_none());
    }

    #[test]
    fn prediction_substring_scan() {
        assert_eq!(extract_verification_prediction("A)"), Prediction::Correct);
        assert_eq!(extract_verification_prediction("B)"), Prediction::Incorrect);
        assert_eq!(
            extract_verification_prediction("…the step is valid, so the option is (A) Yes."),
            Prediction::Correct
        );
    }
}
