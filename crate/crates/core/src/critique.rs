//! Critic that turns failed examples into feedback. The rule-based critic
//! discloses at most one hidden token per critique.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::{
    ordered_prefix_len, HiddenSpec, KeywordSpec, OrderedSpec, Scored, TaskInstance, WorkerOutput,
    DEFAULT_CATEGORY,
};
use crate::error::{Error, Result};
use crate::policy::PromptSequence;
use crate::remote::ChatClient;
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hint {
    Missing(TokenId),
    Forbidden(TokenId),
    /// Protocol position `position` (token `token`) is not realized after
    /// the prompt index `anchor` where the previous step was matched.
    Order {
        position: usize,
        token: TokenId,
        anchor: Option<usize>,
    },
}

impl Hint {
    /// Hidden token this hint discloses.
    pub fn token(&self) -> TokenId {
        match *self {
            Hint::Missing(t) | Hint::Forbidden(t) => t,
            Hint::Order { token, .. } => token,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Hint(Hint),
    Text(String),
}

impl Feedback {
    /// Token form used inside the prompter's history span.
    pub fn tokens(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        let m = vocab.markers();
        match self {
            Feedback::Hint(Hint::Missing(t)) => vec![m.missing, *t],
            Feedback::Hint(Hint::Forbidden(t)) => vec![m.forbidden, *t],
            Feedback::Hint(Hint::Order { token, .. }) => vec![m.order, *token],
            Feedback::Text(text) => vocab.tokenize_lossy(text),
        }
    }

    pub fn summary(&self, vocab: &Vocabulary) -> String {
        let name = |t: &TokenId| vocab.name(*t).unwrap_or("<?>").to_string();
        match self {
            Feedback::Hint(Hint::Missing(t)) => format!("MISSING({})", name(t)),
            Feedback::Hint(Hint::Forbidden(t)) => format!("FORBIDDEN({})", name(t)),
            Feedback::Hint(Hint::Order {
                position, token, ..
            }) => format!("ORDER({position}:{})", name(token)),
            Feedback::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Critique {
    /// Index into the evaluated slice.
    pub instance_ref: usize,
    pub output: WorkerOutput,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueSet {
    pub entries: Vec<Critique>,
}

impl CritiqueSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn hints(&self) -> impl Iterator<Item = Hint> + '_ {
        self.entries.iter().filter_map(|c| match c.feedback {
            Feedback::Hint(h) => Some(h),
            Feedback::Text(_) => None,
        })
    }
}

pub trait Critic: Send + Sync {
    fn critique(
        &self,
        prompt: &PromptSequence,
        instance: &TaskInstance,
        output: &WorkerOutput,
    ) -> Result<Feedback>;
}

/// Deterministic critic with access to the hidden task rules.
///
/// Priority per failed example: the lowest-index missing required or
/// category token, then the lowest-index forbidden token present, then the
/// first unrealized protocol position.
#[derive(Debug, Clone)]
pub struct RuleCritic {
    specs: HashMap<String, HiddenSpec>,
}

impl RuleCritic {
    pub fn new(specs: HashMap<String, HiddenSpec>) -> Self {
        RuleCritic { specs }
    }

    fn keyword_hint(
        spec: &KeywordSpec,
        prompt: &PromptSequence,
        instance: &TaskInstance,
    ) -> Option<Hint> {
        let mut needed = spec.required.clone();
        if instance.category_tag() != DEFAULT_CATEGORY {
            needed.extend(spec.category_token(instance.category_tag()));
        }
        needed.sort_unstable();
        if let Some(&t) = needed.iter().find(|&&t| !prompt.contains(t)) {
            return Some(Hint::Missing(t));
        }
        spec.forbidden
            .iter()
            .find(|&&t| prompt.contains(t))
            .map(|&t| Hint::Forbidden(t))
    }

    fn order_hint(spec: &OrderedSpec, prompt: &PromptSequence) -> Option<Hint> {
        let content = prompt.content();
        let done = ordered_prefix_len(&spec.sequence, content);
        if done == spec.sequence.len() {
            return None;
        }
        let mut anchor = None;
        let mut matched = 0;
        for (i, &t) in content.iter().enumerate() {
            if matched == done {
                break;
            }
            if t == spec.sequence[matched] {
                matched += 1;
                anchor = Some(i);
            }
        }
        Some(Hint::Order {
            position: done,
            token: spec.sequence[done],
            anchor,
        })
    }

    pub fn hint(&self, prompt: &PromptSequence, instance: &TaskInstance) -> Result<Option<Hint>> {
        let spec = self.specs.get(&instance.context_id).ok_or_else(|| {
            Error::invalid(format!("no rules for context `{}`", instance.context_id))
        })?;
        Ok(match spec {
            HiddenSpec::Keyword(k) => Self::keyword_hint(k, prompt, instance),
            HiddenSpec::Ordered(o) => Self::order_hint(o, prompt),
            HiddenSpec::Opaque => None,
        })
    }
}

impl Critic for RuleCritic {
    fn critique(
        &self,
        prompt: &PromptSequence,
        instance: &TaskInstance,
        output: &WorkerOutput,
    ) -> Result<Feedback> {
        match self.hint(prompt, instance)? {
            Some(h) => Ok(Feedback::Hint(h)),
            None => Ok(Feedback::Text(format!(
                "unexpected output `{}`",
                output.text
            ))),
        }
    }
}

/// Default feedback template. Placeholders: `{prompt}`, `{input}`,
/// `{target}`, `{output}`.
pub const DEFAULT_CRITIC_TEMPLATE: &str = include_str!("../assets/critic_template.txt");

/// Feedback model behind a chat-completions endpoint.
pub struct RemoteCritic {
    client: ChatClient,
    vocab: Vocabulary,
    template: String,
}

impl RemoteCritic {
    pub fn new(client: ChatClient, vocab: Vocabulary, template: impl Into<String>) -> Self {
        RemoteCritic {
            client,
            vocab,
            template: template.into(),
        }
    }

    pub fn render(
        &self,
        prompt: &PromptSequence,
        instance: &TaskInstance,
        output: &WorkerOutput,
    ) -> String {
        self.template
            .replace("{prompt}", &self.vocab.render(prompt.tokens()))
            .replace("{input}", &instance.input)
            .replace("{target}", &instance.target)
            .replace("{output}", &output.text)
    }
}

impl Critic for RemoteCritic {
    fn critique(
        &self,
        prompt: &PromptSequence,
        instance: &TaskInstance,
        output: &WorkerOutput,
    ) -> Result<Feedback> {
        let request = self.render(prompt, instance, output);
        let reply = self
            .client
            .remote_call("You review the behaviour of another model.", &request)?;
        Ok(Feedback::Text(reply.text))
    }
}

/// Critiques up to `k` failed examples (score below 1), lowest slice index
/// first. Correct examples are never critiqued.
pub fn generate_critiques(
    critic: &dyn Critic,
    prompt: &PromptSequence,
    slice: &[TaskInstance],
    results: &[Scored],
    k: usize,
) -> Result<CritiqueSet> {
    if slice.len() != results.len() {
        return Err(Error::invalid(
            "worker outputs are not aligned with the slice",
        ));
    }
    let mut entries = Vec::new();
    for (i, (inst, r)) in slice.iter().zip(results).enumerate() {
        if entries.len() == k {
            break;
        }
        if r.score >= 1.0 {
            continue;
        }
        let feedback = critic.critique(prompt, inst, &r.output)?;
        entries.push(Critique {
            instance_ref: i,
            output: r.output.clone(),
            feedback,
        });
    }
    Ok(CritiqueSet { entries })
}
