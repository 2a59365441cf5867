//! RMSProp-style adaptive updates.

use alloc::string::String;
use alloc::vec::Vec;

use crate::math;
use crate::nn::params::{ParamId, ParamSet};

/// One optimizer step over the given parameters, consuming the accumulated
/// gradients (they are zeroed afterwards). Parameters whose gradient
/// contains a non-finite value are skipped and reported by name.
pub fn optimizer_step(
    ps: &mut ParamSet,
    ids: &[ParamId],
    lr: f64,
    decay: f64,
    eps: f64,
) -> Vec<String> {
    let mut skipped = Vec::new();
    for &id in ids {
        let p = ps.param_mut(id);
        if !p.grad.all_finite() {
            skipped.push(p.name.clone());
            p.grad.fill(0.0);
            continue;
        }
        for i in 0..p.value.len() {
            let g = p.grad.data()[i];
            let acc = decay * p.acc.data()[i] + (1.0 - decay) * g * g;
            p.acc.data_mut()[i] = acc;
            p.value.data_mut()[i] -= lr * g / (math::sqrt(acc) + eps);
        }
        p.grad.fill(0.0);
    }
    skipped
}
