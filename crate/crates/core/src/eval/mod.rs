//! Evaluators turn a genome into [`NetworkMetrics`].
//!
//! Failures of the genome itself (unparseable, shape errors, timeouts,
//! divergence) are encoded as untrainable metrics. Only conditions that make
//! the whole run meaningless, such as a worker speaking the wrong protocol,
//! surface as [`EvalError`].

mod surrogate;
mod worker;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use surrogate::{analyze_structure, capacity_term, surrogate_loss, SurrogateEvaluator};
pub use worker::{WorkerConfig, WorkerEvaluator, WorkerRequest, WorkerResponse};

use crate::domain::{NetworkGenome, NetworkMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBudget {
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default)]
    pub train_subset: Option<u64>,
    #[serde(default)]
    pub test_subset: Option<u64>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

fn default_epochs() -> u32 {
    50
}

fn default_timeout_s() -> f64 {
    3600.0
}

impl Default for EvalBudget {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            train_subset: None,
            test_subset: None,
            timeout_s: default_timeout_s(),
        }
    }
}

pub const CIFAR10_TRAIN_SIZE: u64 = 50_000;
pub const CIFAR10_TEST_SIZE: u64 = 10_000;

impl EvalBudget {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.epochs == 0 {
            return Err(EvalError::Config("budget.epochs must be positive".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(EvalError::Config("budget.timeout_s must be positive".into()));
        }
        if self.train_subset.is_some_and(|n| n == 0 || n > CIFAR10_TRAIN_SIZE) {
            return Err(EvalError::Config(format!(
                "budget.train_subset must be in 1..={CIFAR10_TRAIN_SIZE}"
            )));
        }
        if self.test_subset.is_some_and(|n| n == 0 || n > CIFAR10_TEST_SIZE) {
            return Err(EvalError::Config(format!(
                "budget.test_subset must be in 1..={CIFAR10_TEST_SIZE}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("worker protocol violation: {0}")]
    Protocol(String),
    #[error("could not start worker: {0}")]
    Spawn(String),
    #[error("evaluator misconfigured: {0}")]
    Config(String),
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, genome: &NetworkGenome, budget: &EvalBudget) -> Result<NetworkMetrics, EvalError>;

    /// How many evaluations may run at once.
    fn parallelism(&self) -> usize {
        1
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, genome: &NetworkGenome, budget: &EvalBudget) -> Result<NetworkMetrics, EvalError> {
        (**self).evaluate(genome, budget)
    }

    fn parallelism(&self) -> usize {
        (**self).parallelism()
    }
}

/// Evaluates every genome, in parallel up to `evaluator.parallelism()`, and
/// returns metrics aligned with the input order.
pub fn evaluate_batch<E: Evaluator + ?Sized>(
    evaluator: &E,
    genomes: &[&NetworkGenome],
    budget: &EvalBudget,
) -> Result<Vec<NetworkMetrics>, EvalError> {
    parallel_map(genomes, evaluator.parallelism(), |g| evaluator.evaluate(g, budget))
        .into_iter()
        .collect()
}

/// Applies `f` to every item on up to `threads` scoped threads. Output order
/// matches input order no matter which item finishes first.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let parts: Vec<Vec<(usize, R)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break;
                        }
                        done.push((i, f(&items[i])));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    for (i, r) in parts.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    Surrogate,
    Worker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorConfig {
    pub kind: EvaluatorKind,
    #[serde(default)]
    pub budget: EvalBudget,
    #[serde(default)]
    pub worker: Option<WorkerConfig>,
}

impl EvaluatorConfig {
    pub fn surrogate() -> Self {
        Self {
            kind: EvaluatorKind::Surrogate,
            budget: EvalBudget::default(),
            worker: None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        self.budget.validate()?;
        if self.kind == EvaluatorKind::Worker {
            let w = self
                .worker
                .as_ref()
                .ok_or_else(|| EvalError::Config("evaluator.worker is required for kind=worker".into()))?;
            w.validate()?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Evaluator>, EvalError> {
        self.validate()?;
        Ok(match self.kind {
            EvaluatorKind::Surrogate => Box::new(SurrogateEvaluator),
            EvaluatorKind::Worker => Box::new(WorkerEvaluator::spawn(
                self.worker.clone().expect("validated"),
            )?),
        })
    }
}
