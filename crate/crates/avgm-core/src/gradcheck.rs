//! Finite-difference gradient checking utilities, shared by the unit suites
//! and the acceptance gate.

use crate::nn::{ParamId, ParamSet};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Relative error with a floor so near-zero gradients compare absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central difference of `f` with respect to one parameter element.
pub fn central_diff<F: FnMut(&ParamSet) -> f64>(
    ps: &ParamSet,
    id: ParamId,
    elem: usize,
    mut f: F,
) -> f64 {
    let mut plus = ps.clone();
    plus.value_mut(id).data_mut()[elem] += FD_STEP;
    let fp = f(&plus);
    let mut minus = ps.clone();
    minus.value_mut(id).data_mut()[elem] -= FD_STEP;
    let fm = f(&minus);
    (fp - fm) / (2.0 * FD_STEP)
}

