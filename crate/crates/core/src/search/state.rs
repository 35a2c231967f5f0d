use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SearchConfig, SearchError};
use crate::domain::{loss_serde, BestLossTracker, NetworkIndividual, PromptIndividual, PromptStats};
use crate::qd::{generate_centroids, CentroidSet, CvtArchive, QdError, ScoreOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initialization,
    Evolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Init,
    Mutation,
    Crossover,
    Random,
}

/// One line of the per-generation JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: u64,
    pub operator: Operator,
    #[serde(with = "loss_serde")]
    pub best_loss: f64,
    pub batch_trainable_count: usize,
    pub network_niches_filled: usize,
    pub prompt_niches_filled: usize,
    pub wall_time_s: f64,
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Completed generations.
    pub generation: u64,
    pub phase: Phase,
    pub init_batches: u64,
    pub best_loss: BestLossTracker,
    pub network_archive: CvtArchive<NetworkIndividual>,
    pub prompt_archive: CvtArchive<PromptIndividual>,
    pub prompt_stats: PromptStats,
    pub rng: ChaCha8Rng,
    /// Base for odd-slot temperature perturbation.
    pub last_temperature: f64,
    /// Feedback-driven temperature used when the prompt archive is off.
    pub global_temperature: f64,
    /// Best trainable network seen so far.
    pub incumbent: Option<NetworkIndividual>,
    pub next_genome_id: u64,
    pub history: Vec<GenerationLog>,
}

impl RunState {
    pub fn new(cfg: &SearchConfig) -> Result<Self, SearchError> {
        cfg.validate()?;
        let centroids = cached_centroids(cfg.archive_size, cfg.centroid_samples, cfg.centroid_seed)?;
        let phase = if cfg.rules().random_generation {
            Phase::Evolution
        } else {
            Phase::Initialization
        };
        Ok(Self {
            generation: 0,
            phase,
            init_batches: 0,
            best_loss: BestLossTracker::default(),
            network_archive: CvtArchive::new(centroids.clone(), ScoreOrder::LowerIsBetter),
            prompt_archive: CvtArchive::new(centroids, ScoreOrder::HigherIsBetter),
            prompt_stats: PromptStats::default(),
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            last_temperature: cfg.initial_temperature,
            global_temperature: cfg.initial_temperature,
            incumbent: None,
            // Id 0 belongs to the seed network.
            next_genome_id: 1,
            history: Vec::new(),
        })
    }

    pub fn finished(&self, cfg: &SearchConfig) -> bool {
        self.generation >= cfg.generations
    }
}

/// Centroid sets are deterministic in `(k, n_samples, seed)`; build each once
/// per process.
pub fn cached_centroids(k: usize, n_samples: usize, seed: u64) -> Result<CentroidSet, QdError> {
    type Cache = Mutex<HashMap<(usize, usize, u64), CentroidSet>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().expect("centroid cache").get(&(k, n_samples, seed)) {
        return Ok(c.clone());
    }
    let built = generate_centroids(k, n_samples, seed)?;
    cache
        .lock()
        .expect("centroid cache")
        .insert((k, n_samples, seed), built.clone());
    Ok(built)
}
