//! The generation loop: initialization batches from the seed network, then
//! per-generation mutation or crossover with dual-archive commits.
//!
//! Selection, RNG draws, best-loss updates and archive commits happen on one
//! thread in slot order. Completions and evaluations may run in parallel;
//! every random draw they depend on is made before dispatch.

mod config;
mod crossover;
mod engine;
mod state;

pub use config::{ModeRules, SearchConfig, SearchMode};
pub use crossover::{crossover_pairs, crossover_schedule};
pub use engine::{draw_operator, Search};
pub use state::{cached_centroids, GenerationLog, Operator, Phase, RunState};

use crate::domain::DomainError;
use crate::eval::EvalError;
use crate::operators::OperatorError;
use crate::qd::QdError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Archive(#[from] QdError),
    #[error("aborted by observer: {0}")]
    Observer(String),
}
