//! Answer selection across sampled chains: majority voting plus the
//! three verifier-augmented policies (Max, Weighted, Filter).
//!
//! Ties always break toward the earliest sample index, so every policy
//! is deterministic and order-stable.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::LlmBackend;
use crate::error::{Error, Result};
use crate::parse::ExtractedAnswer;
use crate::verifier::{classify_chain, ReasoningChain, ScoringConfig};
use crate::Score;

/// Which policy produced a vote outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VotePolicy {
    Majority,
    Max,
    Weighted,
    Filter,
}

/// The selected answer plus the tally it won against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub winner: ExtractedAnswer,
    pub tally: HashMap<String, Score>,
    pub policy: VotePolicy,
    /// Samples removed before voting (Filter policy) or excluded for
    /// failed answer extraction.
    pub filtered_count: usize,
}

/// Pick the canonical key with the highest weight, ties broken by the
/// earliest first occurrence in sample order.
fn argmax_weight(
    tally: &HashMap<String, Score>,
    first_seen: &HashMap<String, usize>,
) -> Option<String> {
    tally
        .iter()
        .max_by(|(ka, wa), (kb, wb)| {
            wa.partial_cmp(wb)
                .unwrap()
                .then_with(|| first_seen[kb.as_str()].cmp(&first_seen[ka.as_str()]))
        })
        .map(|(k, _)| k.clone())
}

fn vote_weighted_answers(
    answers: &[(&ExtractedAnswer, Score)],
    policy: VotePolicy,
    extra_filtered: usize,
) -> VoteOutcome {
    let mut tally: HashMap<String, Score> = HashMap::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut representative: HashMap<String, ExtractedAnswer> = HashMap::new();
    let mut none_count = 0;
    for (i, (ans, weight)) in answers.iter().enumerate() {
        if ans.is_none() {
            none_count += 1;
            continue;
        }
        let key = ans.canonical.clone();
        *tally.entry(key.clone()).or_insert(0.0) += *weight;
        first_seen.entry(key.clone()).or_insert(i);
        representative.entry(key).or_insert_with(|| (*ans).clone());
    }
    let winner = argmax_weight(&tally, &first_seen)
        .and_then(|k| representative.remove(&k))
        .unwrap_or_else(ExtractedAnswer::none);
    VoteOutcome {
        winner,
        tally,
        policy,
        filtered_count: extra_filtered + none_count,
    }
}

/// Plain self-consistency majority voting. Answers that failed
/// extraction are excluded from the tally (unless all did).
pub fn majority_vote(answers: &[ExtractedAnswer]) -> Result<VoteOutcome> {
    if answers.is_empty() {
        return Err(Error::invalid_input("answers must be non-empty"));
    }
    let weighted: Vec<(&ExtractedAnswer, Score)> = answers.iter().map(|a| (a, 1.0)).collect();
    Ok(vote_weighted_answers(&weighted, VotePolicy::Majority, 0))
}

fn require_scores(chains: &[ReasoningChain]) -> Result<Vec<Score>> {
    chains
        .iter()
        .map(|c| {
            c.chain_score
                .ok_or_else(|| Error::invalid_state("chain is missing its chain_score"))
        })
        .collect()
}

/// Max policy: the answer of the highest scoring chain.
pub fn max_policy(chains: &[ReasoningChain]) -> Result<VoteOutcome> {
    if chains.is_empty() {
        return Err(Error::invalid_input("chains must be non-empty"));
    }
    let scores = require_scores(chains)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut tally = HashMap::new();
    for (c, s) in chains.iter().zip(&scores) {
        if !c.answer.is_none() {
            let entry = tally.entry(c.answer.canonical.clone()).or_insert(*s);
            if *s > *entry {
                *entry = *s;
            }
        }
    }
    Ok(VoteOutcome {
        winner: chains[best].answer.clone(),
        tally,
        policy: VotePolicy::Max,
        filtered_count: chains.iter().filter(|c| c.answer.is_none()).count(),
    })
}

/// Weighted policy: weighted majority voting, each sample's veto power
/// being its chain score.
pub fn weighted_vote(chains: &[ReasoningChain]) -> Result<VoteOutcome> {
    if chains.is_empty() {
        return Err(Error::invalid_input("chains must be non-empty"));
    }
    let scores = require_scores(chains)?;
    let weighted: Vec<(&ExtractedAnswer, Score)> = chains
        .iter()
        .zip(scores)
        .map(|(c, s)| (&c.answer, s))
        .collect();
    Ok(vote_weighted_answers(&weighted, VotePolicy::Weighted, 0))
}

/// Filter policy: classify each chain, majority-vote over the chains
/// classified correct; if none survive, fall back to plain majority
/// over all chains.
pub fn filter_vote(
    backend: &dyn LlmBackend,
    chains: &[ReasoningChain],
    config: &ScoringConfig,
) -> Result<VoteOutcome> {
    if chains.is_empty() {
        return Err(Error::invalid_input("chains must be non-empty"));
    }
    let mut kept: Vec<&ExtractedAnswer> = Vec::new();
    for chain in chains {
        if classify_chain(backend, chain, config, true)? == 1 {
            kept.push(&chain.answer);
        }
    }
    if kept.is_empty() {
        let all: Vec<ExtractedAnswer> = chains.iter().map(|c| c.answer.clone()).collect();
        let mut outcome = majority_vote(&all)?;
        outcome.policy = VotePolicy::Filter;
        outcome.filtered_count = chains.len();
        return Ok(outcome);
    }
    let filtered = chains.len() - kept.len();
    let weighted: Vec<(&ExtractedAnswer, Score)> = kept.into_iter().map(|a| (a, 1.0)).collect();
    Ok(vote_weighted_answers(&weighted, VotePolicy::Filter, filtered))
}
