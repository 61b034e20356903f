//! Central finite-difference checking shared by the layer tests.

use super::store::ParamStore;

pub const EPS: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += EPS;
    let fp = f(&xp);
    xp[i] = x[i] - EPS;
    let fm = f(&xp);
    (fp - fm) / (2.0 * EPS)
}

/// Compares every accumulated gradient in `store` against central
/// differences of `loss` and returns the worst relative error.
pub fn max_store_gradient_error<F: Fn(&ParamStore) -> f64>(store: &mut ParamStore, loss: F) -> f64 {
    let ids: Vec<_> = store.ids().collect();
    let mut worst = 0.0f64;
    for id in ids {
        for i in 0..store.value(id).len() {
            let orig = store.value(id)[i];
            store.value_mut(id)[i] = orig + EPS;
            let fp = loss(store);
            store.value_mut(id)[i] = orig - EPS;
            let fm = loss(store);
            store.value_mut(id)[i] = orig;
            let numeric = (fp - fm) / (2.0 * EPS);
            let analytic = store.grad(id)[i];
            let err = relative_error(analytic, numeric);
            if err > worst {
                log::debug!("{}[{i}]: analytic {analytic} numeric {numeric}", store.name(id));
                worst = err;
            }
        }
    }
    worst
}
