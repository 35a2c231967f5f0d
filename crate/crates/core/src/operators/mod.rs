//! Mutation and crossover operators: prompt assembly, temperature rules,
//! per-slot prompt selection and genome extraction from completions.

mod catalog;
mod prompt;
mod selection;
mod temperature;

pub use catalog::PromptCatalog;
pub use prompt::{
    build_crossover_prompt, build_mutation_prompt, class_body, extract_genome, seed_genome,
    wrap_class, IMPORT_PREAMBLE, SEED_NETWORK_CLASS,
};
pub use selection::{select_batch, select_prompt_for_slot, SlotSelection};
pub use temperature::{
    mutate_temperature_feedback, perturb_temperature_uniform, FEEDBACK_STEP, PERTURBATION_RANGE,
};

use crate::domain::{DomainError, GenomeId};

/// Completion length bound for generation requests.
pub const DEFAULT_MAX_TOKENS: u32 = 768;

/// Input to a completion backend.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenerationRequest {
    pub prompt_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub fn new(prompt_text: String, temperature: f64) -> Self {
        Self {
            prompt_text,
            temperature: crate::domain::clamp_temperature(temperature),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("prompt id {0} is not a mutation prompt")]
    NotAMutationPrompt(u8),
    #[error("crossover needs two distinct parents, got {0} twice")]
    SameParent(GenomeId),
    #[error("no class definition found")]
    NoClassDefinition,
    #[error("no complete network definition in completion")]
    ExtractionFailed,
    #[error("prompt catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}
