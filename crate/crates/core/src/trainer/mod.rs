//! GRPO training of the prompter with a KL anchor and an experience buffer.

mod adam;
mod config;
mod grpo;
mod records;

pub use adam::{apply_adam, AdamConfig, AdamOutcome, AdamState};
pub use config::{TrainerConfig, LARGE_PROMPTER_LEARNING_RATE};
pub use grpo::{grpo_advantages, grpo_loss, GrpoLoss};
pub use records::{
    select_top_prompts, should_stop, ArchivedCandidate, ContextEval, EvalRecord, FinalRecord,
    InitRecord, MetricsRecord, RunReport, SelectedPrompt, StepMetrics,
};

use rand::Rng;

use crate::buffer::{ExperienceBuffer, HistorySample, TrajectoryRecord};
use crate::critique::{generate_critiques, Critic, CritiqueSet};
use crate::env::{
    aggregate_reward, evaluate_grid, mean_score, sample_slice, CallMeter, ContextDescriptor,
    Scored, Split, TaskInstance, TaskSuite, Worker,
};
use crate::error::{Error, Result};
use crate::policy::{
    encode_conditioning, init_params, sample_prompt, ConditioningSequence, DecodeOptions, Decoding,
    Dims, PolicyParams, PromptSequence,
};
use crate::rng::{derive_seed, stream_rng};

/// Everything that evolves during a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: PolicyParams,
    /// Frozen copy of the initial parameters.
    pub ref_params: PolicyParams,
    pub adam: AdamState,
    pub buffer: ExperienceBuffer,
    pub step: u64,
    pub eval_history: Vec<EvalRecord>,
    /// Candidates of the latest step (or the initial prompts), with context.
    pub last_candidates: Vec<(String, PromptSequence)>,
    pub metrics: Vec<MetricsRecord>,
    pub meter: CallMeter,
}

impl TrainState {
    pub fn eval_rewards(&self) -> Vec<f64> {
        self.eval_history.iter().map(|e| e.reward).collect()
    }
}

/// Outcome of [`Trainer::run`]; `state` is kept for checkpointing.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: TrainState,
    pub report: RunReport,
}

pub struct Trainer<'a> {
    config: TrainerConfig,
    tasks: &'a TaskSuite,
    worker: &'a dyn Worker,
    critic: &'a dyn Critic,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: TrainerConfig,
        tasks: &'a TaskSuite,
        worker: &'a dyn Worker,
        critic: &'a dyn Critic,
    ) -> Result<Self> {
        config.validate()?;
        if tasks.contexts.is_empty() {
            return Err(Error::invalid("task suite has no contexts"));
        }
        Ok(Trainer {
            config,
            tasks,
            worker,
            critic,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn tasks(&self) -> &TaskSuite {
        self.tasks
    }

    pub fn dims(&self) -> Dims {
        Dims {
            vocab_size: self.tasks.vocab.len(),
            d_embed: self.config.d_embed,
            d_hidden: self.config.d_hidden,
        }
    }

    fn sampling(&self) -> DecodeOptions {
        DecodeOptions {
            decoding: Decoding::Sample {
                temperature: self.config.temperature,
            },
            max_len: self.config.max_prompt_len,
            eos: self.tasks.vocab.eos(),
        }
    }

    fn train_slice(&self, context_id: &str, seed: u64) -> Result<Vec<TaskInstance>> {
        let available = self.tasks.splits.split(context_id, Split::Train)?.len();
        sample_slice(
            &self.tasks.splits,
            context_id,
            Split::Train,
            self.config.slice_size.min(available),
            seed,
        )
    }

    fn conditioning(
        &self,
        ctx: &ContextDescriptor,
        history: &HistorySample,
    ) -> Result<ConditioningSequence> {
        encode_conditioning(ctx, history, &self.tasks.vocab, self.config.max_prefix_len)
    }

    fn history(&self, state: &TrainState, context_id: &str, seed: u64) -> Result<HistorySample> {
        if self.config.scalar_only {
            return Ok(HistorySample::empty());
        }
        match state.buffer.get(context_id) {
            Some(b) if !b.is_empty() => {
                b.sample_history(self.config.history_size, seed, self.config.history_sampling)
            }
            _ => Ok(HistorySample::empty()),
        }
    }

    fn critiques(
        &self,
        prompt: &PromptSequence,
        slice: &[TaskInstance],
        row: &[Scored],
    ) -> Result<CritiqueSet> {
        if self.config.scalar_only {
            return Ok(CritiqueSet::default());
        }
        generate_critiques(self.critic, prompt, slice, row, self.config.critique_count)
    }

    /// The prompts sampled from the freshly initialized policy with empty
    /// history, one per context. These seed the buffers and serve as the
    /// shared starting point for baselines.
    pub fn starter_prompts(&self) -> Result<Vec<PromptSequence>> {
        let params = init_params(derive_seed(self.config.seed, "init", 0), self.dims())?;
        self.tasks
            .contexts
            .iter()
            .enumerate()
            .map(|(ci, ctx)| self.starter(&params, ctx, ci))
            .collect()
    }

    fn starter(
        &self,
        params: &PolicyParams,
        ctx: &ContextDescriptor,
        ci: usize,
    ) -> Result<PromptSequence> {
        let cond = self.conditioning(ctx, &HistorySample::empty())?;
        let seed = derive_seed(self.config.seed, "init-prompt", ci as u64);
        Ok(sample_prompt(params, cond.tokens(), seed, &self.sampling())?.without_logprobs())
    }

    /// Fresh parameters, a frozen reference copy, and one seeded record per
    /// context buffer.
    pub fn initialize_run(&self) -> Result<TrainState> {
        let seed = self.config.seed;
        let params = init_params(derive_seed(seed, "init", 0), self.dims())?;
        let meter = CallMeter::new();
        let mut buffer = ExperienceBuffer::new(
            self.tasks.contexts.iter().map(|c| c.context_id.clone()),
            self.config.buffer_capacity,
        );
        let mut context_rewards = Vec::new();
        let mut last_candidates = Vec::new();
        for (ci, ctx) in self.tasks.contexts.iter().enumerate() {
            let prompt = self.starter(&params, ctx, ci)?;
            let slice =
                self.train_slice(&ctx.context_id, derive_seed(seed, "init-slice", ci as u64))?;
            let grid = evaluate_grid(self.worker, &[&prompt], &slice, &meter)?;
            let reward = mean_score(&grid[0]);
            let critiques = self.critiques(&prompt, &slice, &grid[0])?;
            let record = TrajectoryRecord {
                prompt: prompt.clone(),
                critiques,
                reward,
                step_created: 0,
                context_id: ctx.context_id.clone(),
            };
            let sub = buffer.get_mut(&ctx.context_id).expect("buffer per context");
            sub.admit_batch(vec![record], self.config.admit_tolerance)?;
            context_rewards.push((ctx.context_id.clone(), reward));
            last_candidates.push((ctx.context_id.clone(), prompt));
        }
        let init = InitRecord {
            context_rewards,
            buffer_sizes: buffer.sizes(),
        };
        Ok(TrainState {
            ref_params: params.clone(),
            adam: AdamState::new(&params),
            params,
            buffer,
            step: 0,
            eval_history: Vec::new(),
            last_candidates,
            metrics: vec![MetricsRecord::Init(init)],
            meter,
        })
    }

    /// One group: sample, score on a shared slice, critique, admit, update.
    ///
    /// Nothing in `state` except the call meter changes if an error occurs.
    pub fn train_step(&self, state: &mut TrainState) -> Result<StepMetrics> {
        let cfg = &self.config;
        let step = state.step + 1;
        let n_ctx = self.tasks.contexts.len();
        let ctx = &self.tasks.contexts[stream_rng(cfg.seed, "context", step).gen_range(0..n_ctx)];
        let history = self.history(
            state,
            &ctx.context_id,
            derive_seed(cfg.seed, "history", step),
        )?;
        let cond = self.conditioning(ctx, &history)?;

        let opts = self.sampling();
        let policy_seed = derive_seed(cfg.seed, "policy", step);
        let prompts = (0..cfg.group_size)
            .map(|i| {
                sample_prompt(
                    &state.params,
                    cond.tokens(),
                    derive_seed(policy_seed, "candidate", i as u64),
                    &opts,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let slice = self.train_slice(&ctx.context_id, derive_seed(cfg.seed, "slice", step))?;
        let refs: Vec<&PromptSequence> = prompts.iter().collect();
        let grid = evaluate_grid(self.worker, &refs, &slice, &state.meter)?;
        let rewards: Vec<f64> = grid.iter().map(|row| mean_score(row)).collect();
        let critiques = prompts
            .iter()
            .zip(&grid)
            .map(|(p, row)| self.critiques(p, &slice, row))
            .collect::<Result<Vec<_>>>()?;

        let advantages = grpo_advantages(&rewards)?;
        let tokens: Vec<&[usize]> = prompts.iter().map(|p| p.tokens()).collect();
        let loss = grpo_loss(
            &state.params,
            &state.ref_params,
            cond.tokens(),
            &tokens,
            &advantages,
            cfg.kl_weight,
        )?;

        let mut sub = state
            .buffer
            .get(&ctx.context_id)
            .expect("buffer per context")
            .clone();
        let records = prompts
            .iter()
            .zip(critiques)
            .zip(&rewards)
            .map(|((p, c), &r)| TrajectoryRecord {
                prompt: p.without_logprobs(),
                critiques: c,
                reward: r,
                step_created: step,
                context_id: ctx.context_id.clone(),
            })
            .collect();
        let admitted = sub.admit_batch(records, cfg.admit_tolerance)?.len();
        sub.evict();

        let mut params = state.params.clone();
        let mut adam = state.adam.clone();
        let outcome = apply_adam(&mut params, &loss.grads, &mut adam, &self.adam_config())?;

        // Commit.
        *state
            .buffer
            .get_mut(&ctx.context_id)
            .expect("buffer per context") = sub;
        state.params = params;
        state.adam = adam;
        state.step = step;
        state.last_candidates = prompts
            .iter()
            .map(|p| (ctx.context_id.clone(), p.without_logprobs()))
            .collect();
        let metrics = StepMetrics {
            step,
            context_id: ctx.context_id.clone(),
            history_len: history.len(),
            candidate_rewards: rewards,
            admitted,
            buffer_sizes: state.buffer.sizes(),
            loss: loss.loss,
            kl: loss.mean_kl(),
            update_rejected: outcome == AdamOutcome::Rejected,
        };
        state.metrics.push(MetricsRecord::Step(metrics.clone()));
        Ok(metrics)
    }

    fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.config.learning_rate,
            beta1: self.config.adam_beta1,
            beta2: self.config.adam_beta2,
            eps: self.config.adam_eps,
        }
    }

    /// Greedy prompt per context scored on the whole `split`, plus the
    /// latest candidates scored for the archive. Training state is untouched
    /// apart from the record being appended.
    pub fn evaluate(&self, state: &mut TrainState, split: Split) -> Result<EvalRecord> {
        let record = self.score_split(state, split)?;
        state.eval_history.push(record.clone());
        state.metrics.push(MetricsRecord::Eval(record.clone()));
        Ok(record)
    }

    fn score_split(&self, state: &TrainState, split: Split) -> Result<EvalRecord> {
        let opts = DecodeOptions {
            decoding: Decoding::Greedy,
            ..self.sampling()
        };
        let mut per_context = Vec::with_capacity(self.tasks.contexts.len());
        for (ci, ctx) in self.tasks.contexts.iter().enumerate() {
            let seed = derive_seed(
                derive_seed(self.config.seed, "eval-history", state.step),
                &ctx.context_id,
                ci as u64,
            );
            let history = self.history(state, &ctx.context_id, seed)?;
            let cond = self.conditioning(ctx, &history)?;
            let prompt = sample_prompt(&state.params, cond.tokens(), 0, &opts)?;
            let data = self.tasks.splits.split(&ctx.context_id, split)?;
            let reward = aggregate_reward(self.worker, &prompt, data, &state.meter)?;
            per_context.push(ContextEval {
                context_id: ctx.context_id.clone(),
                reward,
                prompt: prompt.tokens().to_vec(),
            });
        }
        let mut archive = Vec::with_capacity(state.last_candidates.len());
        for (context_id, prompt) in &state.last_candidates {
            let data = self.tasks.splits.split(context_id, split)?;
            archive.push(ArchivedCandidate {
                context_id: context_id.clone(),
                prompt: prompt.tokens().to_vec(),
                validation_reward: aggregate_reward(self.worker, prompt, data, &state.meter)?,
            });
        }
        let reward = per_context.iter().map(|c| c.reward).sum::<f64>() / per_context.len() as f64;
        Ok(EvalRecord {
            step: state.step,
            reward,
            per_context,
            archive,
        })
    }

    /// Selects the top prompts from the peak evaluation, scores them on the
    /// test split and appends the final record.
    pub fn finalize(
        &self,
        state: &mut TrainState,
        stopped_early: bool,
        failure: Option<String>,
    ) -> Result<RunReport> {
        let worker_calls = state.meter.get();
        let test_meter = CallMeter::new();
        let mut selected = Vec::new();
        if !state.eval_history.is_empty() {
            let (_, top) = select_top_prompts(&state.eval_history, self.config.top_k)?;
            for cand in top {
                let prompt = PromptSequence::new(cand.prompt.clone(), self.tasks.vocab.eos())?;
                let data = self.tasks.splits.split(&cand.context_id, Split::Test)?;
                let test_reward = aggregate_reward(self.worker, &prompt, data, &test_meter)?;
                selected.push(SelectedPrompt {
                    context_id: cand.context_id,
                    prompt: cand.prompt,
                    validation_reward: cand.validation_reward,
                    test_reward,
                });
            }
        }
        state.metrics.push(MetricsRecord::Final(FinalRecord {
            selected,
            steps_run: state.step,
            budget: self.config.max_steps as u64,
            threshold: self.config.threshold,
            worker_calls,
            test_calls: test_meter.get(),
            stopped_early,
            failure,
        }));
        RunReport::from_records(&state.metrics)
    }

    /// Full loop. A failed step is retried once; a second failure ends the
    /// run and the report carries the error.
    pub fn run(&self) -> Result<RunOutcome> {
        self.run_with(|_, _| Ok(()))
    }

    /// Like [`Trainer::run`], calling `on_eval` after every evaluation
    /// (used for checkpointing).
    pub fn run_with(
        &self,
        mut on_eval: impl FnMut(&TrainState, &EvalRecord) -> Result<()>,
    ) -> Result<RunOutcome> {
        let mut state = self.initialize_run()?;
        let first = self.evaluate(&mut state, Split::Validation)?;
        on_eval(&state, &first)?;
        let mut stopped_early = false;
        let mut failure = None;
        while (state.step as usize) < self.config.max_steps {
            if let Err(first) = self.train_step(&mut state) {
                if let Err(second) = self.train_step(&mut state) {
                    failure = Some(format!(
                        "step {} failed twice: {first}; {second}",
                        state.step + 1
                    ));
                    break;
                }
            }
            if state.step % self.config.eval_every as u64 == 0 {
                match self.evaluate(&mut state, Split::Validation) {
                    Ok(record) => on_eval(&state, &record)?,
                    Err(e) => {
                        failure = Some(format!("evaluation at step {} failed: {e}", state.step));
                        break;
                    }
                }
                if should_stop(&state.eval_rewards(), self.config.patience) {
                    stopped_early = true;
                    break;
                }
            }
        }
        let report = match self.finalize(&mut state, stopped_early, failure.clone()) {
            Ok(r) => r,
            Err(e) => {
                let msg = match failure {
                    Some(f) => format!("{f}; test scoring failed: {e}"),
                    None => format!("test scoring failed: {e}"),
                };
                self.finalize_without_test(&mut state, stopped_early, msg)?
            }
        };
        Ok(RunOutcome { state, report })
    }

    fn finalize_without_test(
        &self,
        state: &mut TrainState,
        stopped_early: bool,
        failure: String,
    ) -> Result<RunReport> {
        state.metrics.push(MetricsRecord::Final(FinalRecord {
            selected: Vec::new(),
            steps_run: state.step,
            budget: self.config.max_steps as u64,
            threshold: self.config.threshold,
            worker_calls: state.meter.get(),
            test_calls: 0,
            stopped_early,
            failure: Some(failure),
        }));
        RunReport::from_records(&state.metrics)
    }
}
