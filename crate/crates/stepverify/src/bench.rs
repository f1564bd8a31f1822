//! QA dataset loading, accuracy benchmarking, correctness-classification
//! dataset construction, and classification metrics.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{GenerationParams, LlmBackend};
use crate::consensus::{filter_vote, majority_vote, max_policy, weighted_vote};
use crate::error::{Error, Result};
use crate::parse::{
    decompose_steps, extract_final_answer, AnswerKind, AnswerKindHint, ExtractedAnswer,
};
use crate::prompt::{
    default_generation_params, render_generation_prompt, GenerationContext, PromptStyle,
};
use crate::search::{sb_search, sg_sc_search, sg_search, SearchConfig};
use crate::verifier::{classify_chain, verify_chain, ReasoningChain, ReasoningStep, ScoringConfig};
use crate::Score;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// One QA item from a line-delimited dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub gold_answer: String,
    #[serde(default)]
    pub options: Option<Vec<(String, String)>>,
    pub answer_kind: QaAnswerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaAnswerKind {
    Numeric,
    OptionLetter,
    YesNo,
}

impl QaAnswerKind {
    pub fn hint(&self) -> AnswerKindHint {
        match self {
            QaAnswerKind::Numeric => AnswerKindHint::Numeric,
            QaAnswerKind::OptionLetter => AnswerKindHint::OptionLetter,
            QaAnswerKind::YesNo => AnswerKindHint::YesNo,
        }
    }
}

impl QAItem {
    fn validate(&self) -> Result<()> {
        if self.gold_answer.trim().is_empty() {
            return Err(Error::invalid_input("missing gold_answer"));
        }
        if self.answer_kind == QaAnswerKind::OptionLetter
            && self.options.as_ref().map_or(true, |o| o.is_empty())
        {
            return Err(Error::invalid_input(
                "option_letter item requires non-empty options",
            ));
        }
        Ok(())
    }
}

/// Load a line-delimited QA dataset, validating every record.
pub fn load_qa_dataset(path: impl AsRef<Path>) -> Result<Vec<QAItem>> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = std::io::BufReader::new(file);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        item.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Canonical form of a gold answer, under the same rules the extractor
/// applies to generated text.
pub fn canonicalize_gold(gold: &str, hint: AnswerKindHint) -> String {
    let extracted = extract_final_answer(gold, hint);
    if extracted.is_none() {
        gold.trim().trim_end_matches('.').to_lowercase()
    } else {
        extracted.canonical
    }
}

/// Compare an extracted answer against the gold answer.
pub fn answers_match(extracted: &ExtractedAnswer, gold: &str, hint: AnswerKindHint) -> bool {
    if extracted.kind == AnswerKind::None {
        return false;
    }
    extracted.canonical == canonicalize_gold(gold, hint)
}

/// Build a reasoning chain from a raw completion: decompose steps and
/// attach per-step generation scores from the token overlap.
pub fn chain_from_completion(
    question_id: &str,
    question: &str,
    completion: &crate::backend::Completion,
    style: PromptStyle,
    hint: AnswerKindHint,
) -> Result<ReasoningChain> {
    let decomposition = decompose_steps(&completion.text, style)?;
    let mut steps = Vec::with_capacity(decomposition.steps.len());
    for (i, span) in decomposition.steps.iter().enumerate() {
        let mut logprobs = Vec::new();
        let mut offset = 0;
        for token in &completion.tokens {
            let token_end = offset + token.text.len();
            if token_end > span.start && offset < span.end {
                logprobs.push(token.logprob);
            }
            offset = token_end;
        }
        steps.push(ReasoningStep::new(i + 1, span.text.clone(), logprobs));
    }
    let answer = extract_final_answer(&completion.text, hint);
    Ok(ReasoningChain {
        question_id: question_id.to_string(),
        question: question.to_string(),
        steps,
        verifier_scores: None,
        answer,
        chain_score: None,
    })
}

/// How the benchmark selects each item's final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Single,
    ScMajority,
    ScMax,
    ScWeighted,
    ScFilter,
    Sg,
    SgSc,
    SbSc,
}

impl std::str::FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(BenchMode::Single),
            "sc_majority" | "majority" => Ok(BenchMode::ScMajority),
            "sc_max" | "max" => Ok(BenchMode::ScMax),
            "sc_weighted" | "weighted" => Ok(BenchMode::ScWeighted),
            "sc_filter" | "filter" => Ok(BenchMode::ScFilter),
            "sg" => Ok(BenchMode::Sg),
            "sg_sc" | "sg-sc" => Ok(BenchMode::SgSc),
            "sb_sc" | "sb-sc" => Ok(BenchMode::SbSc),
            other => Err(Error::invalid_input(format!("unknown benchmark mode: {other}"))),
        }
    }
}

/// Per-item outcome in an accuracy report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub id: String,
    pub predicted: String,
    pub gold: String,
    pub correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Accuracy benchmark report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub mode: BenchMode,
    pub style: PromptStyle,
    pub accuracy: f64,
    pub total: usize,
    pub correct: usize,
    pub per_item: Vec<ItemOutcome>,
    pub seed: u64,
    pub config: serde_json::Value,
}

fn sample_chains(
    backend: &dyn LlmBackend,
    item: &QAItem,
    style: PromptStyle,
    n_samples: usize,
    seed: u64,
    context: GenerationContext,
) -> Result<Vec<ReasoningChain>> {
    let render = render_generation_prompt(style, &item.question)?;
    let mut chains = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let params = GenerationParams {
            sample_index: i,
            seed,
            ..default_generation_params(context)
        };
        let completion = backend.generate(&render, &params)?;
        chains.push(chain_from_completion(
            &item.id,
            &item.question,
            &completion,
            style,
            item.answer_kind.hint(),
        )?);
    }
    Ok(chains)
}

fn item_answer(
    backend: &dyn LlmBackend,
    item: &QAItem,
    style: PromptStyle,
    mode: BenchMode,
    scoring: &ScoringConfig,
    search: &SearchConfig,
    seed: u64,
) -> Result<ExtractedAnswer> {
    let mut search = search.clone();
    search.rng_seed = seed;
    search.answer_kind = item.answer_kind.hint();
    match mode {
        BenchMode::Single => {
            let chains = sample_chains(backend, item, style, 1, seed, GenerationContext::ReasoningSample)?;
            Ok(chains.into_iter().next().unwrap().answer)
        }
        BenchMode::ScMajority => {
            let chains = sample_chains(
                backend,
                item,
                style,
                search.sc_initial_samples,
                seed,
                GenerationContext::ScSample,
            )?;
            let answers: Vec<_> = chains.iter().map(|c| c.answer.clone()).collect();
            Ok(majority_vote(&answers)?.winner)
        }
        BenchMode::ScMax | BenchMode::ScWeighted => {
            let mut chains = sample_chains(
                backend,
                item,
                style,
                search.sc_initial_samples,
                seed,
                GenerationContext::ScSample,
            )?;
            for chain in &mut chains {
                verify_chain(backend, chain, scoring)?;
            }
            let outcome = if mode == BenchMode::ScMax {
                max_policy(&chains)?
            } else {
                weighted_vote(&chains)?
            };
            Ok(outcome.winner)
        }
        BenchMode::ScFilter => {
            let chains = sample_chains(
                backend,
                item,
                style,
                search.sc_initial_samples,
                seed,
                GenerationContext::ScSample,
            )?;
            Ok(filter_vote(backend, &chains, scoring)?.winner)
        }
        BenchMode::Sg => Ok(sg_search(backend, &item.id, &item.question, style, scoring, &search)?
            .chain
            .answer),
        BenchMode::SgSc => {
            Ok(sg_sc_search(backend, &item.id, &item.question, style, scoring, &search)?
                .outcome
                .winner)
        }
        BenchMode::SbSc => {
            Ok(sb_search(backend, &item.id, &item.question, style, scoring, &search)?
                .outcome
                .winner)
        }
    }
}

/// Run the accuracy benchmark. A per-item backend failure is retried
/// once and then counted as unanswered (incorrect); the batch never
/// aborts.
pub fn run_accuracy_benchmark(
    backend: &dyn LlmBackend,
    items: &[QAItem],
    style: PromptStyle,
    mode: BenchMode,
    scoring: &ScoringConfig,
    search: &SearchConfig,
    seed: u64,
) -> Result<AccuracyReport> {
    if items.is_empty() {
        return Err(Error::invalid_input("items must be non-empty"));
    }
    let mut per_item = Vec::with_capacity(items.len());
    let mut correct = 0;
    for item in items {
        let mut result = item_answer(backend, item, style, mode, scoring, search, seed);
        if result.is_err() {
            result = item_answer(backend, item, style, mode, scoring, search, seed);
        }
        let outcome = match result {
            Ok(answer) => {
                let matched = answers_match(&answer, &item.gold_answer, item.answer_kind.hint());
                if matched {
                    correct += 1;
                }
                ItemOutcome {
                    id: item.id.clone(),
                    predicted: answer.canonical,
                    gold: item.gold_answer.clone(),
                    correct: matched,
                    error: None,
                }
            }
            Err(e) => ItemOutcome {
                id: item.id.clone(),
                predicted: String::new(),
                gold: item.gold_answer.clone(),
                correct: false,
                error: Some(e.to_string()),
            },
        };
        per_item.push(outcome);
    }
    Ok(AccuracyReport {
        mode,
        style,
        accuracy: correct as f64 / items.len() as f64,
        total: items.len(),
        correct,
        per_item,
        seed,
        config: serde_json::json!({
            "scoring": serde_json::to_value(scoring).unwrap(),
            "search": serde_json::to_value(search).unwrap(),
        }),
    })
}

/// One labeled chain in a correctness-classification dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledChainRecord {
    pub schema_version: u32,
    pub item: QAItem,
    pub chain: ReasoningChain,
    /// 1 iff the extracted answer matches gold.
    pub gold_label: u8,
    pub generator_style: PromptStyle,
}

/// Result of dataset construction, including any per-class shortfall.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectnessDataset {
    pub records: Vec<LabeledChainRecord>,
    pub per_class_target: usize,
    pub per_class_kept: usize,
    pub positives_available: usize,
    pub negatives_available: usize,
}

impl CorrectnessDataset {
    pub fn shortfall(&self) -> usize {
        self.per_class_target.saturating_sub(self.per_class_kept)
    }
}

/// Generate one chain per question over the first `n_questions` items,
/// label by answer match, and subsample a balanced dataset with exactly
/// `n_per_class` records of each label (or the minority count, with a
/// reported shortfall).
pub fn build_correctness_dataset(
    backend: &dyn LlmBackend,
    items: &[QAItem],
    style: PromptStyle,
    n_questions: usize,
    n_per_class: usize,
    seed: u64,
) -> Result<CorrectnessDataset> {
    if n_questions > items.len() {
        return Err(Error::invalid_input(format!(
            "n_questions {n_questions} exceeds dataset size {}",
            items.len()
        )));
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for item in &items[..n_questions] {
        let chain = sample_chains(backend, item, style, 1, seed, GenerationContext::ReasoningSample)?
            .into_iter()
            .next()
            .unwrap();
        let label = u8::from(answers_match(&chain.answer, &item.gold_answer, item.answer_kind.hint()));
        let record = LabeledChainRecord {
            schema_version: DATASET_SCHEMA_VERSION,
            item: item.clone(),
            chain,
            gold_label: label,
            generator_style: style,
        };
        if label == 1 {
            positives.push(record);
        } else {
            negatives.push(record);
        }
    }
    if positives.is_empty() {
        return Err(Error::DatasetConstruction("positive class is empty".into()));
    }
    if negatives.is_empty() {
        return Err(Error::DatasetConstruction("negative class is empty".into()));
    }
    let kept = n_per_class.min(positives.len()).min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives_available = positives.len();
    let negatives_available = negatives.len();
    let mut records = subsample(positives, kept, &mut rng);
    records.extend(subsample(negatives, kept, &mut rng));
    Ok(CorrectnessDataset {
        records,
        per_class_target: n_per_class,
        per_class_kept: kept,
        positives_available,
        negatives_available,
    })
}

/// Seeded uniform subsampling without replacement, preserving the
/// original record order.
fn subsample<T>(pool: Vec<T>, count: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if count >= pool.len() {
        return pool;
    }
    let mut chosen = rand::seq::index::sample(rng, pool.len(), count).into_vec();
    chosen.sort_unstable();
    let mut kept = Vec::with_capacity(count);
    let mut iter = chosen.into_iter().peekable();
    for (i, record) in pool.into_iter().enumerate() {
        if iter.peek() == Some(&i) {
            kept.push(record);
            iter.next();
        }
    }
    kept
}

/// Persist labeled records as line-delimited JSON.
pub fn save_labeled_records(records: &[LabeledChainRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for record in records {
        writeln!(
            file,
            "{}",
            serde_json::to_string(record)
                .map_err(|e| Error::invalid_state(format!("record serialization failed: {e}")))?
        )?;
    }
    Ok(())
}

/// Load labeled records from a line-delimited JSON file.
pub fn load_labeled_records(path: impl AsRef<Path>) -> Result<Vec<LabeledChainRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LabeledChainRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Confusion counts and the five derived classification metrics, all
/// computed from integer counts. Zero denominators yield 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub acc: Score,
    pub tnr: Score,
    pub tpr: Score,
    pub precision: Score,
    pub f1: Score,
}

fn ratio(num: usize, den: usize) -> Score {
    if den == 0 {
        0.0
    } else {
        num as Score / den as Score
    }
}

impl ClassificationMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let acc = ratio(tp + tn, tp + fp + tn + fn_);
        let tpr = ratio(tp, tp + fn_);
        let tnr = ratio(tn, tn + fp);
        let precision = ratio(tp, tp + fp);
        let f1 = if precision + tpr == 0.0 {
            0.0
        } else {
            2.0 * precision * tpr / (precision + tpr)
        };
        ClassificationMetrics {
            tp,
            fp,
            tn,
            fn_,
            acc,
            tnr,
            tpr,
            precision,
            f1,
        }
    }
}

/// Classification report with audit information.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifierEvaluation {
    pub metrics: ClassificationMetrics,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Predict each record's class with the step-wise verifier and score the
/// predictions against the gold labels. Records whose verification fails
/// are skipped with an audit entry and excluded from the denominators.
pub fn evaluate_verifier(
    backend: &dyn LlmBackend,
    records: &[LabeledChainRecord],
    scoring: &ScoringConfig,
) -> Result<VerifierEvaluation> {
    if records.is_empty() {
        return Err(Error::invalid_input("records must be non-empty"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    let mut skipped = 0;
    for record in records {
        let predicted = match classify_chain(backend, &record.chain, scoring, true) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping record {}: {e}", record.item.id);
                skipped += 1;
                continue;
            }
        };
        match (predicted, record.gold_label) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(VerifierEvaluation {
        metrics: ClassificationMetrics::from_counts(tp, fp, tn, fn_),
        evaluated: records.len() - skipped,
        skipped,
    })
}
