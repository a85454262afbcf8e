//! Central finite-difference oracle for gradient tests.
//!
//! Only built for tests (or with the `gradcheck` feature), so downstream
//! crates can check their composite models against it.

use crate::{Graph, ParamId, ParamStore, Result, Var};

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error with a floor on the denominator, so entries whose true
/// gradient is ~0 are judged on absolute error.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the gradient that `build` produces for every parameter in
/// `params` against central differences with step `h`.
///
/// `build` must construct a scalar loss from a fresh graph. `max_entries`
/// caps how many coordinates are probed per parameter (evenly strided).
pub fn check_params<F>(
    store: &ParamStore,
    params: &[ParamId],
    h: f64,
    max_entries: usize,
    build: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    g.backward(loss)?;
    let grads = g.param_grads();

    let mut work = store.clone();
    let mut out = GradCheck {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        checked: 0,
    };
    for &id in params {
        let n = store.get(id).numel();
        let stride = (n / max_entries.max(1)).max(1);
        for i in (0..n).step_by(stride).take(max_entries) {
            let orig = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let plus = eval(&work, &build)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let minus = eval(&work, &build)?;
            work.get_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.get(&id).map_or(0.0, |g| g[i]);
            out.max_abs_err = out.max_abs_err.max((analytic - numeric).abs());
            out.max_rel_err = out.max_rel_err.max(rel_err(analytic, numeric));
            out.checked += 1;
        }
    }
    Ok(out)
}

fn eval<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    Ok(g.value(loss).item())
}
