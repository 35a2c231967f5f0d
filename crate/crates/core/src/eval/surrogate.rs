use super::{EvalBudget, EvalError, Evaluator};
use crate::arch::{ArchError, ArchitectureSummary, Structure};
use crate::domain::{NetworkGenome, NetworkMetrics, DEPTH_WIDTH_CAP};
use crate::qd::Descriptor;

const FLOOR: f64 = 0.2;
const SPAN: f64 = 2.1;
const SCALE: f64 = 6.0;
const PENALTY: f64 = 0.05;
const PENALTY_CENTER: f64 = 0.35;

/// `2.1 * exp(-c / 6)`: the capacity-dependent part of the surrogate loss.
pub fn capacity_term(c: f64) -> f64 {
    SPAN * (-c / SCALE).exp()
}

/// `0.2 + 2.1 * exp(-c / 6) + 0.05 * |dw_norm - 0.35|`.
pub fn surrogate_loss(c: f64, dw_norm: f64) -> f64 {
    FLOOR + capacity_term(c) + PENALTY * (dw_norm - PENALTY_CENTER).abs()
}

/// `(depth, width, flops)` of a summary.
pub fn analyze_structure(s: &ArchitectureSummary) -> Result<(u64, u64, f64), ArchError> {
    let st = s.analyze()?;
    Ok((st.depth, st.width, st.flops))
}

/// Scores genomes analytically from their recovered layer structure.
/// Metrics depend on nothing but the genome text.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurrogateEvaluator;

impl SurrogateEvaluator {
    pub fn metrics_for(source: &str) -> NetworkMetrics {
        let Structure {
            depth,
            width,
            flops,
            log_capacity,
        } = match ArchitectureSummary::from_source(source).and_then(|s| s.analyze()) {
            Ok(s) => s,
            Err(e) => return NetworkMetrics::untrainable(e.to_string()),
        };
        let dw_norm = Descriptor::new(depth as f64 / width as f64 / DEPTH_WIDTH_CAP, 0.0).x();
        NetworkMetrics::trained(surrogate_loss(log_capacity, dw_norm), flops, depth, width)
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, genome: &NetworkGenome, _budget: &EvalBudget) -> Result<NetworkMetrics, EvalError> {
        Ok(Self::metrics_for(&genome.source))
    }
}
