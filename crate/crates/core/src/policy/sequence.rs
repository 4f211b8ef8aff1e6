use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// Prefix fed to the prompter before it starts emitting: the context frame
/// followed by the serialized history span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditioningSequence {
    tokens: Vec<TokenId>,
}

impl ConditioningSequence {
    pub(crate) fn from_tokens(tokens: Vec<TokenId>) -> Self {
        ConditioningSequence { tokens }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// An emitted prompt. Always terminated by exactly one EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSequence {
    tokens: Vec<TokenId>,
    /// Per-step log-probabilities recorded while sampling.
    #[serde(skip)]
    step_logprobs: Option<Vec<f64>>,
    /// Temperature of the distribution `step_logprobs` were taken from.
    #[serde(skip)]
    logprob_temperature: Option<f64>,
}

impl PromptSequence {
    pub fn new(tokens: Vec<TokenId>, eos: TokenId) -> Result<Self> {
        match tokens.iter().position(|&t| t == eos) {
            Some(i) if i + 1 == tokens.len() => Ok(PromptSequence {
                tokens,
                step_logprobs: None,
                logprob_temperature: None,
            }),
            Some(_) => Err(Error::invalid(
                "EOS must appear exactly once, at the end of a prompt",
            )),
            None => Err(Error::invalid("prompt is not terminated by EOS")),
        }
    }

    /// Appends EOS to `content`. Any EOS already in `content` is an error.
    pub fn from_content(mut content: Vec<TokenId>, eos: TokenId) -> Result<Self> {
        content.push(eos);
        PromptSequence::new(content, eos)
    }

    pub(crate) fn with_logprobs(mut self, logprobs: Vec<f64>, temperature: f64) -> Self {
        debug_assert_eq!(logprobs.len(), self.tokens.len());
        self.step_logprobs = Some(logprobs);
        self.logprob_temperature = Some(temperature);
        self
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Tokens without the terminating EOS.
    pub fn content(&self) -> &[TokenId] {
        &self.tokens[..self.tokens.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.content().contains(&token)
    }

    pub fn step_logprobs(&self) -> Option<&[f64]> {
        self.step_logprobs.as_deref()
    }

    pub fn logprob_temperature(&self) -> Option<f64> {
        self.logprob_temperature
    }

    pub fn without_logprobs(&self) -> Self {
        PromptSequence::new(self.tokens.clone(), *self.tokens.last().unwrap()).unwrap()
    }
}
