//! Clipped surrogate objective.

/// `min(ρÂ, clip(ρ, 1−ε, 1+ε)Â)`.
pub fn ppo_clip_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`ppo_clip_objective`] with respect to `ρ`: `Â` where the
/// unclipped branch is active, zero where the clip binds.
pub fn ppo_clip_grad(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(ppo_clip_objective(1.0, 0.37, 0.2), 0.37);
        assert!((ppo_clip_objective(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((ppo_clip_objective(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_binding_against_improvement_kills_gradient() {
        assert_eq!(ppo_clip_grad(2.0, 1.0, 0.2), 0.0);
        assert_eq!(ppo_clip_grad(0.5, -1.0, 0.2), 0.0);
        assert_eq!(ppo_clip_grad(0.5, 1.0, 0.2), 1.0);
        assert_eq!(ppo_clip_grad(1.1, -2.0, 0.2), -2.0);
    }
}
