//! Exploration schedule.

/// Piecewise-linear epsilon: 1.0 at step 0, `final_eps` from `anneal_steps`
/// onward. A pure function of the environment step count.
pub fn epsilon(step: u64, anneal_steps: u64, final_eps: f64) -> f64 {
    if anneal_steps == 0 || step >= anneal_steps {
        return final_eps;
    }
    let frac = step as f64 / anneal_steps as f64;
    1.0 + (final_eps - 1.0) * frac
}
