//! Contrastive experience buffer: one sub-buffer per context holding
//! (prompt, critiques, reward) trajectories.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::critique::CritiqueSet;
use crate::error::{Error, Result};
use crate::policy::PromptSequence;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub prompt: PromptSequence,
    pub critiques: CritiqueSet,
    pub reward: f64,
    pub step_created: u64,
    pub context_id: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySampling {
    /// Best and worst record plus uniform draws.
    #[default]
    Contrastive,
    /// Uniform draws only (ablation).
    Uniform,
}

/// Records chosen for one conditioning prefix, ordered by creation step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistorySample {
    pub records: Vec<TrajectoryRecord>,
}

impl HistorySample {
    pub fn empty() -> Self {
        HistorySample::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBuffer {
    pub context_id: String,
    records: Vec<TrajectoryRecord>,
    pub capacity: usize,
}

/// First index of the extreme reward under `better`, scanning in order.
fn extreme(
    records: &[TrajectoryRecord],
    better: impl Fn(f64, f64) -> bool,
    latest: bool,
) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) if better(r.reward, records[b].reward) => Some(i),
            Some(b) if latest && r.reward == records[b].reward => Some(i),
            keep => keep,
        };
    }
    best
}

impl ContextBuffer {
    pub fn new(context_id: impl Into<String>, capacity: usize) -> Self {
        ContextBuffer {
            context_id: context_id.into(),
            records: Vec::new(),
            capacity: capacity.max(1),
        }
    }

    /// Records in creation order.
    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_reward(&self) -> Option<f64> {
        self.records.iter().map(|r| r.reward).reduce(f64::max)
    }

    /// Appends every candidate whose reward is within `epsilon` of the batch
    /// maximum. Returns admitted candidate indices in order.
    pub fn admit_batch(
        &mut self,
        candidates: Vec<TrajectoryRecord>,
        epsilon: f64,
    ) -> Result<Vec<usize>> {
        if candidates.is_empty() {
            return Err(Error::invalid("empty candidate batch"));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::invalid("admission tolerance must be non-negative"));
        }
        if let Some(c) = candidates.iter().find(|c| c.context_id != self.context_id) {
            return Err(Error::invalid(format!(
                "candidate for `{}` offered to buffer `{}`",
                c.context_id, self.context_id
            )));
        }
        if let Some(c) = candidates.iter().find(|c| !(0.0..=1.0).contains(&c.reward)) {
            return Err(Error::invalid(format!(
                "reward {} outside [0, 1]",
                c.reward
            )));
        }
        let r_max = candidates
            .iter()
            .map(|c| c.reward)
            .fold(f64::NEG_INFINITY, f64::max);
        let threshold = r_max - epsilon;
        let mut admitted = Vec::new();
        for (i, c) in candidates.into_iter().enumerate() {
            if c.reward >= threshold {
                admitted.push(i);
                self.records.push(c);
            }
        }
        Ok(admitted)
    }

    /// Up to `m` records. Contrastive mode always includes the best and the
    /// worst record (earliest on ties) once the buffer exceeds `m`.
    pub fn sample_history(
        &self,
        m: usize,
        seed: u64,
        mode: HistorySampling,
    ) -> Result<HistorySample> {
        if self.records.is_empty() {
            return Err(Error::invalid(format!(
                "buffer `{}` is empty",
                self.context_id
            )));
        }
        if m == 0 {
            return Err(Error::invalid("history size must be at least 1"));
        }
        let n = self.records.len();
        if n <= m {
            return Ok(HistorySample {
                records: self.records.clone(),
            });
        }
        let mut rng = rng_from_seed(seed);
        let mut chosen: Vec<usize> = match mode {
            HistorySampling::Uniform => index::sample(&mut rng, n, m).into_vec(),
            HistorySampling::Contrastive => {
                let best = extreme(&self.records, |a, b| a > b, false).unwrap();
                let worst = extreme(&self.records, |a, b| a < b, false).unwrap();
                let mut fixed = vec![best];
                if worst != best && m >= 2 {
                    fixed.push(worst);
                }
                let rest: Vec<usize> = (0..n).filter(|i| !fixed.contains(i)).collect();
                let extra = m - fixed.len();
                fixed.extend(
                    index::sample(&mut rng, rest.len(), extra)
                        .into_iter()
                        .map(|j| rest[j]),
                );
                fixed
            }
        };
        chosen.sort_by_key(|&i| (self.records[i].step_created, i));
        Ok(HistorySample {
            records: chosen
                .into_iter()
                .map(|i| self.records[i].clone())
                .collect(),
        })
    }

    /// Shrinks to capacity. Removes the lowest-reward record that is neither
    /// the best nor the most recent minimum-reward record, oldest first on
    /// ties. When only those two remain over capacity, the failure exemplar
    /// goes before the best.
    pub fn evict(&mut self) {
        while self.records.len() > self.capacity {
            let best = extreme(&self.records, |a, b| a > b, true).unwrap();
            let worst = extreme(&self.records, |a, b| a < b, true).unwrap();
            let victim = self
                .records
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != best && *i != worst)
                .min_by(|(i, a), (j, b)| {
                    a.reward
                        .total_cmp(&b.reward)
                        .then(a.step_created.cmp(&b.step_created))
                        .then(i.cmp(j))
                })
                .map(|(i, _)| i)
                .unwrap_or(if worst != best { worst } else { 0 });
            self.records.remove(victim);
        }
    }
}

/// Union of the per-context sub-buffers, in context order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperienceBuffer {
    buffers: Vec<ContextBuffer>,
}

impl ExperienceBuffer {
    pub fn new(context_ids: impl IntoIterator<Item = String>, capacity: usize) -> Self {
        ExperienceBuffer {
            buffers: context_ids
                .into_iter()
                .map(|c| ContextBuffer::new(c, capacity))
                .collect(),
        }
    }

    pub fn get(&self, context_id: &str) -> Option<&ContextBuffer> {
        self.buffers.iter().find(|b| b.context_id == context_id)
    }

    pub fn get_mut(&mut self, context_id: &str) -> Option<&mut ContextBuffer> {
        self.buffers.iter_mut().find(|b| b.context_id == context_id)
    }

    pub fn buffers(&self) -> &[ContextBuffer] {
        &self.buffers
    }

    /// Global view: every record of every sub-buffer.
    pub fn records(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.buffers.iter().flat_map(|b| b.records.iter())
    }

    pub fn len(&self) -> usize {
        self.buffers.iter().map(ContextBuffer::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> Vec<(String, usize)> {
        self.buffers
            .iter()
            .map(|b| (b.context_id.clone(), b.len()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(reward: f64, step: u64) -> TrajectoryRecord {
        TrajectoryRecord {
            prompt: PromptSequence::from_content(vec![step as usize + 20], 1).unwrap(),
            critiques: CritiqueSet::default(),
            reward,
            step_created: step,
            context_id: "c".into(),
        }
    }

    fn rewards(b: &ContextBuffer) -> Vec<f64> {
        b.records().iter().map(|r| r.reward).collect()
    }

    #[test]
    fn admission_examples() {
        let batch = || vec![rec(0.9, 1), rec(0.7, 1), rec(0.9, 1)];
        let mut b = ContextBuffer::new("c", 64);
        assert_eq!(b.admit_batch(batch(), 0.0).unwrap(), vec![0, 2]);
        let mut b = ContextBuffer::new("c", 64);
        assert_eq!(b.admit_batch(batch(), 0.25).unwrap(), vec![0, 1, 2]);
        let mut b = ContextBuffer::new("c", 64);
        assert_eq!(b.admit_batch(vec![rec(0.0, 1)], 0.0).unwrap(), vec![0]);
    }

    #[test]
    fn admission_rejects_mixed_contexts() {
        let mut other = rec(0.5, 1);
        other.context_id = "d".into();
        let mut b = ContextBuffer::new("c", 64);
        assert!(b.admit_batch(vec![rec(0.5, 1), other], 0.1).is_err());
        assert!(b.is_empty());
        assert!(b.admit_batch(vec![], 0.1).is_err());
    }

    #[test]
    fn history_examples() {
        let mut b = ContextBuffer::new("c", 64);
        b.admit_batch(vec![rec(0.1, 0)], 0.0).unwrap();
        let h = b
            .sample_history(3, 1, HistorySampling::Contrastive)
            .unwrap();
        assert_eq!(h.len(), 1);

        b.admit_batch(vec![rec(0.5, 1)], 0.0).unwrap();
        b.admit_batch(vec![rec(0.9, 2)], 0.0).unwrap();
        let h = b
            .sample_history(2, 1, HistorySampling::Contrastive)
            .unwrap();
        let r: Vec<f64> = h.records.iter().map(|r| r.reward).collect();
        assert_eq!(r, vec![0.1, 0.9]);

        let h = b
            .sample_history(5, 1, HistorySampling::Contrastive)
            .unwrap();
        assert_eq!(h.records, b.records());
        assert!(ContextBuffer::new("c", 4)
            .sample_history(2, 0, HistorySampling::Contrastive)
            .is_err());
    }

    #[test]
    fn eviction_examples() {
        let mut b = ContextBuffer::new("c", 2);
        for (i, r) in [0.2, 0.8, 0.5].into_iter().enumerate() {
            b.records.push(rec(r, i as u64));
        }
        b.evict();
        assert_eq!(rewards(&b), vec![0.2, 0.8]);

        let mut b = ContextBuffer::new("c", 5);
        b.records.push(rec(0.3, 0));
        b.evict();
        assert_eq!(b.len(), 1);

        let mut b = ContextBuffer::new("c", 1);
        for i in 0..4 {
            b.records.push(rec(0.5, i));
        }
        b.evict();
        assert_eq!(
            b.records()
                .iter()
                .map(|r| r.step_created)
                .collect::<Vec<_>>(),
            vec![3]
        );

        let mut b = ContextBuffer::new("c", 1);
        b.records.push(rec(0.9, 0));
        b.records.push(rec(0.1, 1));
        b.evict();
        assert_eq!(rewards(&b), vec![0.9]);
    }
}
