use std::collections::HashMap;

use super::{KeywordSpec, TaskInstance, Worker, WorkerOutput, DEFAULT_CATEGORY};
use crate::error::{Error, Result};
use crate::policy::PromptSequence;

/// Succeeds when the prompt holds every required token, no forbidden token,
/// and the control token of the instance's category (default always passes).
#[derive(Debug, Clone)]
pub struct KeywordWorker {
    specs: HashMap<String, KeywordSpec>,
}

impl KeywordWorker {
    pub fn new(specs: HashMap<String, KeywordSpec>) -> Self {
        KeywordWorker { specs }
    }

    pub fn spec(&self, context_id: &str) -> Option<&KeywordSpec> {
        self.specs.get(context_id)
    }

    pub fn is_correct(
        spec: &KeywordSpec,
        prompt: &PromptSequence,
        instance: &TaskInstance,
    ) -> bool {
        let has = |t| prompt.contains(t);
        let category_ok = match instance.category_tag() {
            DEFAULT_CATEGORY => true,
            tag => spec.category_token(tag).is_none_or(has),
        };
        spec.required.iter().all(|&t| has(t))
            && !spec.forbidden.iter().any(|&t| has(t))
            && category_ok
    }
}

impl Worker for KeywordWorker {
    fn execute(&self, prompt: &PromptSequence, instance: &TaskInstance) -> Result<WorkerOutput> {
        let spec = self
            .specs
            .get(&instance.context_id)
            .ok_or_else(|| Error::invalid(format!("unknown context `{}`", instance.context_id)))?;
        let correct = Self::is_correct(spec, prompt, instance);
        Ok(WorkerOutput {
            text: if correct {
                instance.target.clone()
            } else {
                "wrong".to_string()
            },
            correct: Some(correct),
        })
    }

    fn score(
        &self,
        output: &WorkerOutput,
        _instance: &TaskInstance,
        _prompt: &PromptSequence,
    ) -> f64 {
        if output.correct == Some(true) {
            1.0
        } else {
            0.0
        }
    }
}
