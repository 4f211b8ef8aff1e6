use serde::{Deserialize, Serialize};

use super::{TaskInstance, Worker, WorkerOutput};
use crate::error::Result;
use crate::policy::PromptSequence;
use crate::remote::ChatClient;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Case-folded target containment.
    #[default]
    Contains,
    /// Whitespace-trimmed equality.
    Exact,
}

impl Matcher {
    pub fn matches(self, output: &str, target: &str) -> bool {
        match self {
            Matcher::Contains => output.to_lowercase().contains(&target.to_lowercase()),
            Matcher::Exact => output.trim() == target.trim(),
        }
    }
}

/// A black-box model behind a chat-completions endpoint. The rendered
/// prompt goes in the system message and the task input in the user message.
pub struct RemoteWorker {
    client: ChatClient,
    vocab: Vocabulary,
    matcher: Matcher,
}

impl RemoteWorker {
    pub fn new(client: ChatClient, vocab: Vocabulary, matcher: Matcher) -> Self {
        RemoteWorker {
            client,
            vocab,
            matcher,
        }
    }
}

impl Worker for RemoteWorker {
    fn execute(&self, prompt: &PromptSequence, instance: &TaskInstance) -> Result<WorkerOutput> {
        let reply = self
            .client
            .remote_call(&self.vocab.render(prompt.tokens()), &instance.input)?;
        Ok(WorkerOutput {
            text: reply.text,
            correct: None,
        })
    }

    fn score(
        &self,
        output: &WorkerOutput,
        instance: &TaskInstance,
        _prompt: &PromptSequence,
    ) -> f64 {
        if self.matcher.matches(&output.text, &instance.target) {
            1.0
        } else {
            0.0
        }
    }

    fn max_in_flight(&self) -> usize {
        self.client.config().in_flight
    }
}
