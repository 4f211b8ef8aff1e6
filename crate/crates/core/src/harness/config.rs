//! The run configuration file: one TOML document with a section per
//! component.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::synthetic::SyntheticConfig;
use crate::env::Matcher;
use crate::error::{Error, Result};
use crate::evo::EvoConfig;
use crate::remote::EndpointConfig;
use crate::trainer::TrainerConfig;

/// Where tasks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum Environment {
    /// Generated task family with rule-based worker and critic.
    Synthetic(SyntheticConfig),
    /// A dataset file scored by a model behind `[endpoint]`, critiqued by
    /// the model behind `[critic_endpoint]` (or `[endpoint]` if absent).
    Remote {
        /// Words the prompter may emit.
        vocabulary: Vec<String>,
        #[serde(default)]
        matcher: Matcher,
        /// Critic template file; the built-in template if absent.
        #[serde(default)]
        critic_template: Option<PathBuf>,
    },
}

impl Default for Environment {
    fn default() -> Self {
        Environment::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trainer: TrainerConfig,
    pub evo: EvoConfig,
    pub environment: Environment,
    pub endpoint: EndpointConfig,
    pub critic_endpoint: Option<EndpointConfig>,
}

impl RunConfig {
    pub fn parse(source: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(source).map_err(|e| {
            let key = e
                .span()
                .map(|s| key_at(source, s.start))
                .unwrap_or_else(|| "<document>".into());
            Error::Config {
                key,
                message: e.message().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let scoped = |section: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config { key, message } => Error::Config {
                    key: format!("{section}.{key}"),
                    message,
                },
                other => other,
            })
        };
        scoped("trainer", self.trainer.validate())?;
        scoped("evo", self.evo.validate())?;
        if let Environment::Synthetic(s) = &self.environment {
            scoped("environment", s.validate())?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Dotted key of the assignment at byte `offset`, qualified by the
/// enclosing table header.
fn key_at(source: &str, offset: usize) -> String {
    let before = &source[..offset.min(source.len())];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = source[line_start..].lines().next().unwrap_or("");
    let section = before[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').to_string());
    let key = line.split('=').next().unwrap_or("").trim();
    match (section, key) {
        (_, k) if k.starts_with('[') => k.trim_matches(|c| c == '[' || c == ']').to_string(),
        (Some(s), "") => s,
        (Some(s), k) => format!("{s}.{k}"),
        (None, k) => k.to_string(),
    }
}
