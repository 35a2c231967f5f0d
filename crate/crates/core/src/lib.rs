//! Quality-diversity neural architecture search with code-generation
//! operators.
//!
//! Two CVT-MAP-Elites archives cooperate: one holds networks (program text
//! of a PyTorch module) keyed by depth-to-width ratio and FLOPs, the other
//! holds `(prompt, temperature)` individuals keyed by prompt id and
//! temperature. A completion backend acts as the mutation and crossover
//! operator; an evaluator scores each generated network by test loss.

pub mod arch;
pub mod domain;
pub mod eval;
pub mod llm;
pub mod operators;
pub mod persist;
pub mod qd;
pub mod search;
