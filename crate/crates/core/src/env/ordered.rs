use std::collections::HashMap;

use super::{OrderedSpec, TaskInstance, Worker, WorkerOutput};
use crate::error::{Error, Result};
use crate::policy::PromptSequence;
use crate::vocab::TokenId;

/// Length of the longest prefix of `sequence` that occurs in `prompt` as an
/// in-order subsequence. Greedy earliest matching is optimal here.
pub fn ordered_prefix_len(sequence: &[TokenId], prompt: &[TokenId]) -> usize {
    let mut matched = 0;
    for &t in prompt {
        if matched < sequence.len() && t == sequence[matched] {
            matched += 1;
        }
    }
    matched
}

/// Rewards prompts that lay out a hidden protocol in order; partial credit
/// is the fraction of the protocol prefix realized.
#[derive(Debug, Clone)]
pub struct OrderedProtocolWorker {
    specs: HashMap<String, OrderedSpec>,
}

impl OrderedProtocolWorker {
    pub fn new(specs: HashMap<String, OrderedSpec>) -> Self {
        OrderedProtocolWorker { specs }
    }

    fn spec(&self, context_id: &str) -> Result<&OrderedSpec> {
        self.specs
            .get(context_id)
            .ok_or_else(|| Error::invalid(format!("unknown context `{context_id}`")))
    }
}

impl Worker for OrderedProtocolWorker {
    fn execute(&self, prompt: &PromptSequence, instance: &TaskInstance) -> Result<WorkerOutput> {
        let spec = self.spec(&instance.context_id)?;
        let done = ordered_prefix_len(&spec.sequence, prompt.content());
        let correct = done == spec.sequence.len();
        Ok(WorkerOutput {
            text: if correct {
                instance.target.clone()
            } else {
                format!("stopped after {done}")
            },
            correct: Some(correct),
        })
    }

    fn score(
        &self,
        _output: &WorkerOutput,
        instance: &TaskInstance,
        prompt: &PromptSequence,
    ) -> f64 {
        match self.spec(&instance.context_id) {
            Ok(spec) if !spec.sequence.is_empty() => {
                ordered_prefix_len(&spec.sequence, prompt.content()) as f64
                    / spec.sequence.len() as f64
            }
            _ => 0.0,
        }
    }
}
