use std::time::Instant;

use rand::Rng;

use super::{crossover_pairs, crossover_schedule, GenerationLog, ModeRules, Operator, Phase, RunState, SearchConfig, SearchError};
use crate::domain::{
    network_descriptor, prompt_descriptor, update_curiosity, CuriosityOutcome, GenomeId, NetworkGenome,
    NetworkIndividual, NetworkMetrics, Origin, PromptIndividual, NUM_MUTATION_PROMPTS,
};
use crate::eval::{evaluate_batch, parallel_map, EvalBudget, Evaluator};
use crate::llm::{CompletionBackend, SlotKey};
use crate::operators::{
    build_crossover_prompt, build_mutation_prompt, extract_genome, mutate_temperature_feedback, seed_genome,
    select_batch, GenerationRequest, PromptCatalog, SlotSelection,
};

/// Mutation with probability `p_mutation`, else crossover. One draw per
/// generation.
pub fn draw_operator<R: Rng + ?Sized>(rng: &mut R, p_mutation: f64) -> Operator {
    if rng.random::<f64>() < p_mutation {
        Operator::Mutation
    } else {
        Operator::Crossover
    }
}

struct SlotPlan {
    prompt: String,
    temperature: f64,
    parents: Vec<GenomeId>,
    origin: Origin,
    selection: Option<SlotSelection>,
}

/// A configured search over one backend and one evaluator.
pub struct Search<'a> {
    cfg: SearchConfig,
    rules: ModeRules,
    backend: &'a dyn CompletionBackend,
    evaluator: &'a dyn Evaluator,
    budget: EvalBudget,
    catalog: PromptCatalog,
    seed: NetworkGenome,
}

impl<'a> Search<'a> {
    pub fn new(
        cfg: SearchConfig,
        backend: &'a dyn CompletionBackend,
        evaluator: &'a dyn Evaluator,
    ) -> Result<Self, SearchError> {
        cfg.validate()?;
        Ok(Self {
            rules: cfg.rules(),
            cfg,
            backend,
            evaluator,
            budget: EvalBudget::default(),
            catalog: PromptCatalog::default(),
            seed: seed_genome(GenomeId(0)),
        })
    }

    pub fn with_budget(mut self, budget: EvalBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_catalog(mut self, catalog: PromptCatalog) -> Self {
        self.catalog = catalog;
        self
    }

    pub fn with_seed_genome(mut self, seed: NetworkGenome) -> Self {
        self.seed = seed;
        self
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    pub fn initial_state(&self) -> Result<RunState, SearchError> {
        RunState::new(&self.cfg)
    }

    /// Runs a fresh search to completion.
    pub fn run(&self) -> Result<RunState, SearchError> {
        let mut state = self.initial_state()?;
        self.run_from(&mut state, |_, _| Ok(()))?;
        Ok(state)
    }

    /// Steps until `cfg.generations` are done, calling `on_generation` after
    /// each commit. An error leaves `state` at the last committed generation.
    pub fn run_from<F>(&self, state: &mut RunState, mut on_generation: F) -> Result<(), SearchError>
    where
        F: FnMut(&RunState, &GenerationLog) -> Result<(), String>,
    {
        while !state.finished(&self.cfg) {
            let log = self.step(state)?;
            on_generation(state, &log).map_err(SearchError::Observer)?;
        }
        Ok(())
    }

    /// One generation. `state` changes only if the whole generation succeeds.
    pub fn step(&self, state: &mut RunState) -> Result<GenerationLog, SearchError> {
        let started = Instant::now();
        let mut rng = state.rng.clone();
        let mut last_temperature = state.last_temperature;
        let (operator, slots) = self.plan(state, &mut rng, &mut last_temperature)?;

        let jobs: Vec<(GenerationRequest, SlotKey)> = slots
            .iter()
            .enumerate()
            .map(|(slot, plan)| {
                let mut req = GenerationRequest::new(plan.prompt.clone(), plan.temperature);
                req.max_tokens = self.cfg.max_tokens;
                let key = SlotKey {
                    generation: state.generation,
                    slot,
                    sample_seed: rng.random(),
                };
                (req, key)
            })
            .collect();
        let completions = parallel_map(&jobs, self.cfg.completion_parallelism, |(req, key)| {
            self.backend.complete(req, *key)
        });

        let first_id = state.next_genome_id;
        let genomes: Vec<Result<NetworkGenome, String>> = completions
            .into_iter()
            .zip(&slots)
            .enumerate()
            .map(|(i, (completion, plan))| match completion {
                Ok(text) => extract_genome(
                    &text,
                    GenomeId(first_id + i as u64),
                    plan.parents.clone(),
                    plan.origin,
                )
                .map_err(|e| e.to_string()),
                Err(e) => {
                    log::warn!("generation {} slot {i}: {e}", state.generation);
                    Err(e.to_string())
                }
            })
            .collect();
        let runnable: Vec<&NetworkGenome> = genomes.iter().filter_map(|g| g.as_ref().ok()).collect();
        let mut metrics = evaluate_batch(self.evaluator, &runnable, &self.budget)?.into_iter();
        let results: Vec<(Option<NetworkGenome>, NetworkMetrics)> = genomes
            .into_iter()
            .map(|g| match g {
                Ok(g) => {
                    let m = metrics.next().expect("one metric per genome");
                    (Some(g), m)
                }
                Err(e) => (None, NetworkMetrics::untrainable(e)),
            })
            .collect();

        let mut next = state.clone();
        next.rng = rng;
        next.last_temperature = last_temperature;
        let log = self.commit(&mut next, operator, &slots, results, started)?;
        *state = next;
        Ok(log)
    }

    fn plan<R: Rng>(
        &self,
        state: &RunState,
        rng: &mut R,
        last_temperature: &mut f64,
    ) -> Result<(Operator, Vec<SlotPlan>), SearchError> {
        if self.rules.random_generation {
            let slots = self.random_slots(&self.seed, self.cfg.initial_temperature, rng)?;
            return Ok((Operator::Random, slots));
        }
        if state.phase == Phase::Initialization {
            let t = if self.rules.prompt_archive {
                self.cfg.initial_temperature
            } else {
                state.global_temperature
            };
            return Ok((Operator::Init, self.random_slots(&self.seed, t, rng)?));
        }

        if draw_operator(rng, self.rules.p_mutation) == Operator::Crossover && self.rules.network_archive {
            let pairs = crossover_pairs(
                &state.network_archive,
                self.cfg.crossover_top_n,
                self.cfg.crossover_neighbors,
            );
            if !pairs.is_empty() {
                return Ok((Operator::Crossover, self.crossover_slots(state, &pairs)?));
            }
            log::warn!(
                "generation {}: crossover needs two occupied cells; mutating instead",
                state.generation + 1
            );
        }

        // Nothing trainable yet (every init network failed): keep mutating
        // the seed rather than stalling.
        let best = if self.rules.network_archive {
            state.network_archive.best_occupant().ok()
        } else {
            state.incumbent.as_ref()
        };
        let parent = match best {
            Some(ind) => &ind.genome,
            None => {
                log::warn!(
                    "generation {}: no trainable network yet; mutating the seed",
                    state.generation + 1
                );
                &self.seed
            }
        };
        let slots = if self.rules.prompt_archive {
            select_batch(self.cfg.batch_size, &state.prompt_archive, last_temperature, rng)
                .into_iter()
                .map(|sel| self.mutation_slot(parent, sel))
                .collect::<Result<_, _>>()?
        } else {
            self.random_slots(parent, state.global_temperature, rng)?
        };
        Ok((Operator::Mutation, slots))
    }

    fn mutation_slot(&self, parent: &NetworkGenome, sel: SlotSelection) -> Result<SlotPlan, SearchError> {
        Ok(SlotPlan {
            prompt: build_mutation_prompt(parent, sel.prompt_id, &self.catalog)?,
            temperature: sel.temperature,
            parents: vec![parent.id],
            origin: Origin::Mutation {
                prompt_id: sel.prompt_id,
            },
            selection: Some(sel),
        })
    }

    fn random_slots<R: Rng>(
        &self,
        parent: &NetworkGenome,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Vec<SlotPlan>, SearchError> {
        (0..self.cfg.batch_size)
            .map(|_| {
                let sel = SlotSelection {
                    prompt_id: rng.random_range(0..NUM_MUTATION_PROMPTS) as u8,
                    temperature,
                    source_cell: None,
                };
                self.mutation_slot(parent, sel)
            })
            .collect()
    }

    fn crossover_slots(&self, state: &RunState, pairs: &[(usize, usize)]) -> Result<Vec<SlotPlan>, SearchError> {
        crossover_schedule(pairs, self.cfg.batch_size)
            .into_iter()
            .map(|(a, b)| {
                let first = &state.network_archive.cell(a).expect("scheduled cell").occupant.genome;
                let second = &state.network_archive.cell(b).expect("scheduled cell").occupant.genome;
                Ok(SlotPlan {
                    prompt: build_crossover_prompt(first, second, &self.catalog)?,
                    temperature: self.cfg.crossover_temperature,
                    parents: vec![first.id, second.id],
                    origin: Origin::Crossover,
                    selection: None,
                })
            })
            .collect()
    }

    fn commit(
        &self,
        next: &mut RunState,
        operator: Operator,
        slots: &[SlotPlan],
        results: Vec<(Option<NetworkGenome>, NetworkMetrics)>,
        started: Instant,
    ) -> Result<GenerationLog, SearchError> {
        let rules = self.rules;
        let feeds_prompts = matches!(operator, Operator::Init | Operator::Mutation);

        // Slot-order pass: temperature feedback against the running best,
        // then the best-loss update.
        let mut best_at_eval = Vec::with_capacity(slots.len());
        let mut new_temperatures = Vec::with_capacity(slots.len());
        let mut improved = Vec::with_capacity(slots.len());
        for ((genome, m), plan) in results.iter().zip(slots) {
            let best = next.best_loss.get();
            best_at_eval.push(best);
            new_temperatures.push(mutate_temperature_feedback(plan.temperature, m.loss, best));
            if feeds_prompts && !rules.prompt_archive && !rules.random_generation {
                next.global_temperature = mutate_temperature_feedback(next.global_temperature, m.loss, best);
            }
            let better = next.best_loss.observe(m.loss);
            if better {
                next.incumbent = genome.clone().map(|genome| NetworkIndividual {
                    genome,
                    metrics: m.clone(),
                });
            }
            improved.push(better);
        }

        let trainable = results.iter().filter(|(_, m)| m.trainable).count();
        for (i, (genome, m)) in results.into_iter().enumerate() {
            let loss = m.loss;
            let outcome = match genome {
                Some(genome) if m.trainable => {
                    if rules.network_archive {
                        let d = network_descriptor(&m)?;
                        let ind = NetworkIndividual { genome, metrics: m };
                        if next.network_archive.try_insert(ind, d, loss)?.added() {
                            CuriosityOutcome::AddedToArchive
                        } else {
                            CuriosityOutcome::NotAdded
                        }
                    } else if improved[i] {
                        CuriosityOutcome::AddedToArchive
                    } else {
                        CuriosityOutcome::NotAdded
                    }
                }
                _ => CuriosityOutcome::Untrainable,
            };
            let Some(sel) = slots[i].selection.filter(|_| feeds_prompts && rules.prompt_archive) else {
                continue;
            };
            let source = sel
                .source_cell
                .and_then(|c| next.prompt_archive.occupant_mut(c))
                .filter(|p| p.prompt_id == sel.prompt_id && p.temperature == sel.temperature);
            let curiosity = match source {
                Some(p) => {
                    update_curiosity(p, outcome);
                    p.curiosity
                }
                None => outcome.delta(),
            };
            next.prompt_stats
                .update(sel.prompt_id, loss, best_at_eval[i])?;
            let candidate = PromptIndividual {
                prompt_id: sel.prompt_id,
                temperature: new_temperatures[i],
                curiosity,
            };
            let score = next.prompt_stats.fitness(sel.prompt_id) as f64;
            next.prompt_archive
                .try_insert(candidate.clone(), prompt_descriptor(&candidate), score)?;
        }

        if next.phase == Phase::Initialization {
            next.init_batches += 1;
            let n = self.cfg.random_initial_networks;
            let networks_ready = !rules.network_archive || next.network_archive.len() >= n;
            let prompts_ready = !rules.prompt_archive || next.prompt_archive.len() >= n;
            if networks_ready && prompts_ready {
                next.phase = Phase::Evolution;
            } else if next.init_batches >= self.cfg.max_init_batches {
                log::warn!(
                    "initialization cap of {} batches reached with {} network and {} prompt occupants",
                    self.cfg.max_init_batches,
                    next.network_archive.len(),
                    next.prompt_archive.len()
                );
                next.phase = Phase::Evolution;
            }
        }

        next.generation += 1;
        next.next_genome_id += slots.len() as u64;
        let log = GenerationLog {
            generation: next.generation,
            operator,
            best_loss: next.best_loss.get(),
            batch_trainable_count: trainable,
            network_niches_filled: next.network_archive.len(),
            prompt_niches_filled: next.prompt_archive.len(),
            wall_time_s: if self.cfg.record_wall_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        next.history.push(log.clone());
        Ok(log)
    }
}
