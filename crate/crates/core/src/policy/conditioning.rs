use super::sequence::ConditioningSequence;
use crate::buffer::{HistorySample, TrajectoryRecord};
use crate::env::ContextDescriptor;
use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// One history entry: prompt tokens (no EOS), critique tokens, reward decile.
pub fn serialize_entry(record: &TrajectoryRecord, vocab: &Vocabulary) -> Vec<TokenId> {
    let mut out: Vec<TokenId> = record.prompt.content().to_vec();
    for c in &record.critiques.entries {
        out.extend(c.feedback.tokens(vocab));
    }
    out.push(vocab.reward_token(record.reward));
    out
}

/// Builds `<ctx> d(T) </ctx> <hist> entries... </hist>`.
///
/// Entries keep the sample's order. When the frame exceeds `budget`, whole
/// entries are dropped oldest-first.
pub fn encode_conditioning(
    context: &ContextDescriptor,
    history: &HistorySample,
    vocab: &Vocabulary,
    budget: usize,
) -> Result<ConditioningSequence> {
    let m = vocab.markers();
    let frame = context.description_tokens.len() + 4;
    if frame > budget {
        return Err(Error::invalid(format!(
            "context `{}` needs {frame} tokens but the prefix budget is {budget}",
            context.context_id
        )));
    }
    let entries: Vec<Vec<TokenId>> = history
        .records
        .iter()
        .map(|r| serialize_entry(r, vocab))
        .collect();
    let mut used: usize = entries.iter().map(Vec::len).sum();
    let mut first = 0;
    while frame + used > budget {
        used -= entries[first].len();
        first += 1;
    }

    let mut tokens = Vec::with_capacity(frame + used);
    tokens.push(m.ctx_begin);
    tokens.extend_from_slice(&context.description_tokens);
    tokens.push(m.ctx_end);
    tokens.push(m.hist_begin);
    for e in &entries[first..] {
        tokens.extend_from_slice(e);
    }
    tokens.push(m.hist_end);
    Ok(ConditioningSequence::from_tokens(tokens))
}
