//! Evolutionary prompt search: a small population, critique-guided
//! mutation and elitist selection. A deliberately simple stand-in for
//! reflective evolutionary optimizers, sharing the worker, critic and call
//! meter with the trainer.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::critique::{generate_critiques, Critic, CritiqueSet, Hint};
use crate::env::{
    aggregate_reward, evaluate_grid, mean_score, sample_slice, CallMeter, Split, TaskSuite, Worker,
};
use crate::error::{Error, Result};
use crate::policy::PromptSequence;
use crate::rng::{derive_seed, rng_from_seed};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoConfig {
    pub population_size: usize,
    /// Individuals kept unchanged each generation (q).
    pub survivors: usize,
    /// Probability of following a critique hint when one is available;
    /// otherwise a random edit is applied.
    pub hint_rate: f64,
    pub generations: usize,
    /// Stop before a generation that would exceed this many worker calls.
    pub max_worker_calls: Option<u64>,
    pub slice_size: usize,
    pub critique_count: usize,
    pub max_prompt_len: usize,
    pub seed: u64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population_size: 8,
            survivors: 2,
            hint_rate: 1.0,
            generations: 100,
            max_worker_calls: None,
            slice_size: 16,
            critique_count: 2,
            max_prompt_len: 12,
            seed: 0,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.population_size < 2 {
            return bad("population_size", "must be at least 2");
        }
        if self.survivors == 0 || self.survivors >= self.population_size {
            return bad("survivors", "must satisfy 1 <= survivors < population_size");
        }
        if !(0.0..=1.0).contains(&self.hint_rate) {
            return bad("hint_rate", "must lie in [0, 1]");
        }
        if self.slice_size == 0 {
            return bad("slice_size", "must be positive");
        }
        if self.max_prompt_len == 0 {
            return bad("max_prompt_len", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub prompt: PromptSequence,
    /// Fitness on the most recent slice; 0 until evaluated.
    pub fitness: f64,
    /// Index of the parent in the previous population.
    pub parent: Option<usize>,
}

impl Individual {
    pub fn new(prompt: PromptSequence) -> Self {
        Individual {
            prompt,
            fitness: 0.0,
            parent: None,
        }
    }
}

/// Applies exactly one edit.
///
/// A hint, when followed, repairs what it names: `Missing(t)` inserts `t`,
/// `Forbidden(t)` removes every `t`, `Order` moves the token right after
/// the position where the previous protocol step matched. Otherwise a
/// uniform insert, delete or swap is made.
pub fn mutate(
    ind: &Individual,
    critiques: &CritiqueSet,
    seed: u64,
    vocab: &Vocabulary,
    hint_rate: f64,
    max_len: usize,
) -> Result<Individual> {
    let mut rng = rng_from_seed(seed);
    let mut content = ind.prompt.content().to_vec();
    let hints: Vec<Hint> = critiques.hints().collect();
    let follow = !hints.is_empty() && rng.gen_bool(hint_rate);
    if follow {
        match *hints.choose(&mut rng).expect("non-empty") {
            Hint::Missing(t) => insert(&mut content, t, &mut rng, max_len),
            Hint::Forbidden(t) => content.retain(|&x| x != t),
            Hint::Order { token, anchor, .. } => {
                let at = anchor.map_or(0, |a| a + 1);
                if let Some(pos) = content
                    .iter()
                    .skip(at)
                    .position(|&x| x == token)
                    .map(|p| p + at)
                {
                    content.remove(pos);
                } else if content.len() + 1 >= max_len {
                    content.pop();
                }
                content.insert(at.min(content.len()), token);
            }
        }
    } else {
        random_edit(&mut content, vocab, &mut rng, max_len);
    }
    Ok(Individual {
        prompt: PromptSequence::from_content(content, vocab.eos())?,
        fitness: 0.0,
        parent: None,
    })
}

/// Inserts at a uniform position; a full prompt gets a uniform slot
/// overwritten instead.
fn insert(content: &mut Vec<TokenId>, t: TokenId, rng: &mut impl Rng, max_len: usize) {
    if content.len() + 1 >= max_len {
        if content.is_empty() {
            return;
        }
        let i = rng.gen_range(0..content.len());
        content[i] = t;
    } else {
        let i = rng.gen_range(0..=content.len());
        content.insert(i, t);
    }
}

fn random_edit(content: &mut Vec<TokenId>, vocab: &Vocabulary, rng: &mut impl Rng, max_len: usize) {
    let token = rng.gen_range(vocab.content_range());
    match rng.gen_range(0..3) {
        1 if !content.is_empty() => {
            let i = rng.gen_range(0..content.len());
            content.remove(i);
        }
        2 if content.len() >= 2 => {
            let i = rng.gen_range(0..content.len());
            let j = rng.gen_range(0..content.len());
            content.swap(i, j);
        }
        _ => insert(content, token, rng, max_len),
    }
}

/// Scores `population` on one shared train slice, keeps the best
/// `survivors` (ties by index), and refills with mutants of survivors
/// picked in proportion to fitness (uniformly if all are zero).
///
/// Returns the evaluated current population and the next one.
pub fn evolve_step(
    population: &[Individual],
    tasks: &TaskSuite,
    context_id: &str,
    worker: &dyn Worker,
    critic: &dyn Critic,
    config: &EvoConfig,
    seed: u64,
    meter: &CallMeter,
) -> Result<(Vec<Individual>, Vec<Individual>)> {
    if population.is_empty() {
        return Err(Error::invalid("population is empty"));
    }
    let available = tasks.splits.split(context_id, Split::Train)?.len();
    let slice = sample_slice(
        &tasks.splits,
        context_id,
        Split::Train,
        config.slice_size.min(available),
        derive_seed(seed, "slice", 0),
    )?;
    let prompts: Vec<&PromptSequence> = population.iter().map(|i| &i.prompt).collect();
    let grid = evaluate_grid(worker, &prompts, &slice, meter)?;
    let mut evaluated: Vec<Individual> = population.to_vec();
    let mut critiques = Vec::with_capacity(population.len());
    for (ind, row) in evaluated.iter_mut().zip(&grid) {
        ind.fitness = mean_score(row);
        critiques.push(generate_critiques(
            critic,
            &ind.prompt,
            &slice,
            row,
            config.critique_count,
        )?);
    }

    let mut order: Vec<usize> = (0..evaluated.len()).collect();
    order.sort_by(|&a, &b| {
        evaluated[b]
            .fitness
            .total_cmp(&evaluated[a].fitness)
            .then(a.cmp(&b))
    });
    let keep = &order[..config.survivors.min(order.len())];
    let mut next: Vec<Individual> = keep
        .iter()
        .map(|&i| Individual {
            parent: Some(i),
            ..evaluated[i].clone()
        })
        .collect();

    let total: f64 = keep.iter().map(|&i| evaluated[i].fitness).sum();
    let mut rng = rng_from_seed(derive_seed(seed, "select", 0));
    let mut child = 0u64;
    while next.len() < config.population_size {
        let parent = if total > 0.0 {
            let mut x = rng.gen_range(0.0..total);
            *keep
                .iter()
                .find(|&&i| {
                    x -= evaluated[i].fitness;
                    x < 0.0
                })
                .unwrap_or(keep.last().expect("survivors"))
        } else {
            *keep.choose(&mut rng).expect("survivors")
        };
        let mut kid = mutate(
            &evaluated[parent],
            &critiques[parent],
            derive_seed(seed, "mutate", child),
            &tasks.vocab,
            config.hint_rate,
            config.max_prompt_len,
        )?;
        kid.parent = Some(parent);
        next.push(kid);
        child += 1;
    }
    Ok((evaluated, next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u64,
    pub context_id: String,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_ever: f64,
    pub worker_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoContextResult {
    pub context_id: String,
    pub best_prompt: Vec<TokenId>,
    pub best_fitness: f64,
    pub test_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoReport {
    pub per_context: Vec<EvoContextResult>,
    pub trajectory: Vec<GenerationRecord>,
    pub mean_test_reward: f64,
    pub generations_run: u64,
    /// Same unit as the trainer's count: one per worker execution.
    pub worker_calls: u64,
    pub test_calls: u64,
}

impl EvoReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Evolves one population per context from `starters` (one per context,
/// in suite order; the rest of each initial population is random edits of
/// the starter). A final evaluation scores the last generation, so a zero
/// budget reports the initial population's best.
pub fn run_evolution(
    config: &EvoConfig,
    tasks: &TaskSuite,
    worker: &dyn Worker,
    critic: &dyn Critic,
    starters: &[PromptSequence],
) -> Result<EvoReport> {
    config.validate()?;
    if starters.len() != tasks.contexts.len() {
        return Err(Error::invalid(
            "need exactly one starter prompt per context",
        ));
    }
    let seed = config.seed;
    let meter = CallMeter::new();
    let mut populations: Vec<Vec<Individual>> = Vec::new();
    for (ci, starter) in starters.iter().enumerate() {
        let mut pop = vec![Individual::new(starter.clone())];
        let mut rng = rng_from_seed(derive_seed(seed, "evo-init", ci as u64));
        while pop.len() < config.population_size {
            let mut content = starter.content().to_vec();
            random_edit(&mut content, &tasks.vocab, &mut rng, config.max_prompt_len);
            pop.push(Individual::new(PromptSequence::from_content(
                content,
                tasks.vocab.eos(),
            )?));
        }
        populations.push(pop);
    }

    let cost: u64 = tasks
        .contexts
        .iter()
        .map(|c| {
            Ok(config
                .slice_size
                .min(tasks.splits.split(&c.context_id, Split::Train)?.len()) as u64)
        })
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum::<u64>()
        * config.population_size as u64;
    let mut best: Vec<Option<Individual>> = vec![None; tasks.contexts.len()];
    let mut trajectory = Vec::new();
    let mut generation = 0u64;
    loop {
        for (ci, ctx) in tasks.contexts.iter().enumerate() {
            let gen_seed = derive_seed(
                derive_seed(seed, "evo", generation),
                &ctx.context_id,
                ci as u64,
            );
            let (evaluated, next) = evolve_step(
                &populations[ci],
                tasks,
                &ctx.context_id,
                worker,
                critic,
                config,
                gen_seed,
                &meter,
            )?;
            for ind in &evaluated {
                if best[ci].as_ref().is_none_or(|b| ind.fitness > b.fitness) {
                    best[ci] = Some(ind.clone());
                }
            }
            trajectory.push(GenerationRecord {
                generation,
                context_id: ctx.context_id.clone(),
                best_fitness: evaluated
                    .iter()
                    .map(|i| i.fitness)
                    .fold(f64::NEG_INFINITY, f64::max),
                mean_fitness: evaluated.iter().map(|i| i.fitness).sum::<f64>()
                    / evaluated.len() as f64,
                best_ever: best[ci].as_ref().map_or(0.0, |b| b.fitness),
                worker_calls: meter.get(),
            });
            populations[ci] = next;
        }
        let exhausted = config
            .max_worker_calls
            .is_some_and(|cap| meter.get() + cost > cap);
        if generation as usize >= config.generations || exhausted {
            break;
        }
        generation += 1;
    }

    let worker_calls = meter.get();
    let test_meter = CallMeter::new();
    let mut per_context = Vec::new();
    for (ctx, b) in tasks.contexts.iter().zip(best) {
        let b = b.expect("every context evaluated at least once");
        let test = tasks.splits.split(&ctx.context_id, Split::Test)?;
        per_context.push(EvoContextResult {
            context_id: ctx.context_id.clone(),
            best_prompt: b.prompt.tokens().to_vec(),
            best_fitness: b.fitness,
            test_reward: aggregate_reward(worker, &b.prompt, test, &test_meter)?,
        });
    }
    let mean_test_reward =
        per_context.iter().map(|c| c.test_reward).sum::<f64>() / per_context.len() as f64;
    Ok(EvoReport {
        per_context,
        trajectory,
        mean_test_reward,
        generations_run: generation,
        worker_calls,
        test_calls: test_meter.get(),
    })
}
