use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::TaskInstance;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" | "val" | "valid" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSplits {
    pub context_id: String,
    pub train: Vec<TaskInstance>,
    pub validation: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
}

impl ContextSplits {
    pub fn get(&self, split: Split) -> &[TaskInstance] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<TaskInstance> {
        match split {
            Split::Train => &mut self.train,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }
}

/// Train/validation/test data per context, in a stable context order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplits {
    contexts: Vec<ContextSplits>,
}

impl DatasetSplits {
    /// Validates that every split is non-empty and the three splits of a
    /// context share no instance.
    pub fn new(contexts: Vec<ContextSplits>) -> Result<Self> {
        if contexts.is_empty() {
            return Err(Error::invalid("dataset has no contexts"));
        }
        let mut seen_ids = HashSet::new();
        for c in &contexts {
            if !seen_ids.insert(c.context_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate context `{}`",
                    c.context_id
                )));
            }
            let mut seen = HashSet::new();
            for split in [Split::Train, Split::Validation, Split::Test] {
                let data = c.get(split);
                if data.is_empty() {
                    return Err(Error::invalid(format!(
                        "context `{}` has an empty {split} split",
                        c.context_id
                    )));
                }
                for inst in data {
                    if inst.context_id != c.context_id {
                        return Err(Error::invalid(format!(
                            "instance of `{}` filed under `{}`",
                            inst.context_id, c.context_id
                        )));
                    }
                    if inst.target.is_empty() {
                        return Err(Error::invalid(format!(
                            "empty target in context `{}`",
                            c.context_id
                        )));
                    }
                }
                let keys: HashSet<_> = data
                    .iter()
                    .map(|i| (&i.input, &i.target, &i.category))
                    .collect();
                if keys.iter().any(|k| seen.contains(k)) {
                    return Err(Error::invalid(format!(
                        "context `{}`: {split} split overlaps another split",
                        c.context_id
                    )));
                }
                seen.extend(keys);
            }
        }
        Ok(DatasetSplits { contexts })
    }

    pub fn contexts(&self) -> &[ContextSplits] {
        &self.contexts
    }

    pub fn context_ids(&self) -> impl Iterator<Item = &str> {
        self.contexts.iter().map(|c| c.context_id.as_str())
    }

    pub fn get(&self, context_id: &str) -> Result<&ContextSplits> {
        self.contexts
            .iter()
            .find(|c| c.context_id == context_id)
            .ok_or_else(|| Error::invalid(format!("unknown context `{context_id}`")))
    }

    pub fn split(&self, context_id: &str, split: Split) -> Result<&[TaskInstance]> {
        Ok(self.get(context_id)?.get(split))
    }
}

/// Uniform sample without replacement; deterministic in `seed`.
pub fn sample_slice(
    splits: &DatasetSplits,
    context_id: &str,
    split: Split,
    size: usize,
    seed: u64,
) -> Result<Vec<TaskInstance>> {
    let data = splits.split(context_id, split)?;
    if size == 0 {
        return Err(Error::invalid("slice size must be positive"));
    }
    if size > data.len() {
        return Err(Error::invalid(format!(
            "slice of {size} requested from a {split} split of {}",
            data.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    Ok(index::sample(&mut rng, data.len(), size)
        .into_iter()
        .map(|i| data[i].clone())
        .collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    context_id: String,
    input: String,
    target: String,
    #[serde(default)]
    category: Option<String>,
    split: String,
}

/// Parses line-delimited JSON records (`context_id`, `input`, `target`,
/// optional `category`, `split`). Errors carry 1-based line numbers.
pub fn parse_dataset_jsonl(text: &str) -> Result<DatasetSplits> {
    let mut contexts: Vec<ContextSplits> = Vec::new();
    let mut first_line: Vec<Vec<usize>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Dataset {
            line: line_no,
            message: e.to_string(),
        })?;
        let split = Split::parse(&rec.split).ok_or_else(|| Error::Dataset {
            line: line_no,
            message: format!("unknown split `{}`", rec.split),
        })?;
        if rec.target.is_empty() {
            return Err(Error::Dataset {
                line: line_no,
                message: "empty target".into(),
            });
        }
        let idx = match contexts.iter().position(|c| c.context_id == rec.context_id) {
            Some(i) => i,
            None => {
                contexts.push(ContextSplits {
                    context_id: rec.context_id.clone(),
                    train: vec![],
                    validation: vec![],
                    test: vec![],
                });
                first_line.push(Vec::new());
                contexts.len() - 1
            }
        };
        let inst = TaskInstance {
            context_id: rec.context_id,
            input: rec.input,
            target: rec.target,
            category: rec.category,
        };
        let ctx = &mut contexts[idx];
        let dup = [Split::Train, Split::Validation, Split::Test]
            .into_iter()
            .filter(|&s| s != split)
            .flat_map(|s| ctx.get(s).iter())
            .any(|other| {
                other.input == inst.input
                    && other.target == inst.target
                    && other.category == inst.category
            });
        if dup {
            return Err(Error::Dataset {
                line: line_no,
                message: format!(
                    "instance also appears in another split of `{}`",
                    ctx.context_id
                ),
            });
        }
        ctx.get_mut(split).push(inst);
        first_line[idx].push(line_no);
    }
    for (c, lines) in contexts.iter().zip(&first_line) {
        for split in [Split::Train, Split::Validation, Split::Test] {
            if c.get(split).is_empty() {
                return Err(Error::Dataset {
                    line: lines.first().copied().unwrap_or(0),
                    message: format!("context `{}` has no {split} records", c.context_id),
                });
            }
        }
    }
    DatasetSplits::new(contexts)
}

pub fn load_dataset_jsonl(path: &Path) -> Result<DatasetSplits> {
    parse_dataset_jsonl(&std::fs::read_to_string(path)?)
}
