use rand::Rng;

use crate::domain::clamp_temperature;

pub const FEEDBACK_STEP: f64 = 0.05;
pub const PERTURBATION_RANGE: f64 = 0.1;

/// `+0.05` when `loss <= best_loss`, otherwise `-0.05`, clamped to `[0, 1]`.
/// Non-finite losses always take the decrease branch.
pub fn mutate_temperature_feedback(t: f64, loss: f64, best_loss: f64) -> f64 {
    if loss.is_finite() && loss <= best_loss {
        clamp_temperature(t + FEEDBACK_STEP)
    } else {
        clamp_temperature(t - FEEDBACK_STEP)
    }
}

/// `t + U(-0.1, 0.1)`, clamped to `[0, 1]`.
pub fn perturb_temperature_uniform<R: Rng + ?Sized>(t: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random_range(-PERTURBATION_RANGE..=PERTURBATION_RANGE);
    clamp_temperature(t + u)
}
