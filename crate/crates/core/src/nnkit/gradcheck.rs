use super::tensor::{Grads, Module};

/// Smallest denominator used when forming relative errors, so that
/// parameters with (near) zero gradient are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic gradients against central finite differences of `loss`
/// for every scalar parameter of `model`, returning the maximum relative error.
pub fn grad_check<M: Module>(model: &mut M, analytic: &Grads, h: f64, loss: impl Fn(&M) -> f64) -> f64 {
    let n_params = model.params().len();
    let mut worst: f64 = 0.0;
    for p in 0..n_params {
        let len = model.params()[p].len();
        for i in 0..len {
            let orig = model.params()[p].data()[i];
            model.params_mut()[p].data_mut()[i] = orig + h;
            let plus = loss(model);
            model.params_mut()[p].data_mut()[i] = orig - h;
            let minus = loss(model);
            model.params_mut()[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic.0[p].data()[i], numeric));
        }
    }
    worst
}
