//! Assembles tasks, worker and critic from a configuration.

use std::path::Path;

use crate::critique::{Critic, RemoteCritic, DEFAULT_CRITIC_TEMPLATE};
use crate::env::synthetic::SyntheticSuite;
use crate::env::{load_dataset_jsonl, RemoteWorker, TaskSuite, Worker};
use crate::error::{Error, Result};
use crate::remote::ChatClient;
use crate::vocab::Vocabulary;

use super::config::{Environment, RunConfig};

pub struct Workbench {
    pub tasks: TaskSuite,
    pub worker: Box<dyn Worker>,
    pub critic: Box<dyn Critic>,
    /// Hash of the dataset file, or of the generated suite.
    pub dataset_hash: String,
}

impl Workbench {
    pub fn build(config: &RunConfig, dataset: Option<&Path>) -> Result<Self> {
        match &config.environment {
            Environment::Synthetic(env) => {
                if dataset.is_some() {
                    return Err(Error::Config {
                        key: "environment.source".into(),
                        message: "synthetic environments generate their own data; drop --dataset"
                            .into(),
                    });
                }
                let suite = SyntheticSuite::generate(env)?;
                let json = serde_json::to_string(&suite.tasks).expect("suite serializes");
                Ok(Workbench {
                    worker: suite.worker(),
                    critic: Box::new(suite.critic()),
                    dataset_hash: super::sha256_hex(json.as_bytes()),
                    tasks: suite.tasks,
                })
            }
            Environment::Remote {
                vocabulary,
                matcher,
                critic_template,
            } => {
                let path = dataset.ok_or_else(|| Error::Config {
                    key: "environment.source".into(),
                    message: "remote environments need --dataset".into(),
                })?;
                let bytes = std::fs::read(path)?;
                let splits = load_dataset_jsonl(path)?;
                let vocab = Vocabulary::new(Vec::new(), vocabulary.clone())?;
                let tasks = TaskSuite::from_dataset(vocab.clone(), splits)?;
                let template = match critic_template {
                    Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config {
                        key: "environment.critic_template".into(),
                        message: format!("{}: {e}", p.display()),
                    })?,
                    None => DEFAULT_CRITIC_TEMPLATE.to_string(),
                };
                let critic_endpoint = config
                    .critic_endpoint
                    .clone()
                    .unwrap_or_else(|| config.endpoint.clone());
                Ok(Workbench {
                    worker: Box::new(RemoteWorker::new(
                        ChatClient::new(config.endpoint.clone()),
                        vocab.clone(),
                        *matcher,
                    )),
                    critic: Box::new(RemoteCritic::new(
                        ChatClient::new(critic_endpoint),
                        vocab,
                        template,
                    )),
                    dataset_hash: super::sha256_hex(&bytes),
                    tasks,
                })
            }
        }
    }
}
