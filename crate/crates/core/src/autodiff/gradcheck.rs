//! Central finite-difference verification of reverse-mode gradients.

use crate::autodiff::graph::{Graph, VarId};
use crate::autodiff::params::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// One gradient entry whose relative error exceeded the tolerance.
#[derive(Clone, Debug)]
pub struct FlaggedEntry<F> {
    pub param: String,
    pub index: usize,
    pub autodiff: F,
    pub numeric: F,
    pub rel_error: F,
}

/// Per-parameter comparison of autodiff against finite differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport<F> {
    /// (parameter name, max relative error over its entries).
    pub per_param: Vec<(String, F)>,
    pub flagged: Vec<FlaggedEntry<F>>,
    pub max_rel_error: F,
    pub tol: F,
}

impl<F: Scalar> GradCheckReport<F> {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Compare the reverse-mode gradient of a scalar loss against central finite
/// differences `(loss(t + step) - loss(t - step)) / (2 step)` for every entry
/// of every stored parameter.
///
/// `build` must construct the loss deterministically from the current store
/// contents; it is re-run twice per parameter entry.
///
/// Relative error uses `|ad - fd| / max(|ad|, |fd|, 1e-8)`.
pub fn grad_check<F, B>(
    store: &mut ParamStore<F>,
    build: B,
    step: F,
    tol: F,
) -> Result<GradCheckReport<F>>
where
    F: Scalar,
    B: Fn(&mut Graph<F>, &ParamStore<F>) -> Result<VarId>,
{
    store.clear_grads();
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    let loss_value = graph.value(loss).item();
    if !loss_value.is_finite() {
        return Err(Error::Domain(format!(
            "grad_check: non-finite loss {loss_value}"
        )));
    }
    graph.backward(loss)?;
    graph.accumulate_param_grads(store)?;

    let ids: Vec<_> = store.ids().collect();
    let autodiff: Vec<Vec<F>> = ids
        .iter()
        .map(|&id| {
            store
                .get(id)
                .grad()
                .map(<[F]>::to_vec)
                .unwrap_or_else(|| vec![F::zero(); store.get(id).len()])
        })
        .collect();
    store.clear_grads();

    let floor = cast::<F>(1e-8);
    let two = cast::<F>(2.0);
    let mut per_param = Vec::with_capacity(ids.len());
    let mut flagged = Vec::new();
    let mut max_rel = F::zero();

    for (pi, &id) in ids.iter().enumerate() {
        let name = store.name(id).to_string();
        let mut param_max = F::zero();
        #[allow(clippy::needless_range_loop)] // k is reported in flagged entries
        for k in 0..store.get(id).len() {
            let original = store.get(id).as_slice()[k];

            store.get_mut(id).as_mut_slice()[k] = original + step;
            let plus = eval_loss(store, &build)?;
            store.get_mut(id).as_mut_slice()[k] = original - step;
            let minus = eval_loss(store, &build)?;
            store.get_mut(id).as_mut_slice()[k] = original;

            let numeric = (plus - minus) / (two * step);
            let ad = autodiff[pi][k];
            let denom = ad.abs().max(numeric.abs()).max(floor);
            let rel = (ad - numeric).abs() / denom;

            param_max = param_max.max(rel);
            if rel > tol {
                flagged.push(FlaggedEntry {
                    param: name.clone(),
                    index: k,
                    autodiff: ad,
                    numeric,
                    rel_error: rel,
                });
            }
        }
        max_rel = max_rel.max(param_max);
        per_param.push((name, param_max));
    }

    Ok(GradCheckReport {
        per_param,
        flagged,
        max_rel_error: max_rel,
        tol,
    })
}

fn eval_loss<F, B>(store: &ParamStore<F>, build: &B) -> Result<F>
where
    F: Scalar,
    B: Fn(&mut Graph<F>, &ParamStore<F>) -> Result<VarId>,
{
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    let value = graph.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "grad_check: non-finite loss {value}"
        )));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tensor::Tensor;

    #[test]
    fn quadratic_loss_gradient_is_theta() {
        // loss = ||theta||^2 / 2, analytic gradient theta itself.
        let mut store = ParamStore::new();
        let id = store.register("theta", Tensor::vector(vec![0.3, -1.2, 2.5]));
        let report = grad_check(
            &mut store,
            |g, s| {
                let t = g.param(s, id);
                let sq = g.mul(t, t)?;
                let total = g.sum(sq);
                Ok(g.scale(total, 0.5))
            },
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
        assert!(report.max_rel_error < 1e-9);
    }

    #[test]
    fn corrupted_backward_rule_is_flagged() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::vector(vec![0.7, -0.4]));
        let report = grad_check(
            &mut store,
            |g, s| {
                g.corrupt_tanh_backward();
                let w = g.param(s, id);
                let y = g.tanh(w);
                Ok(g.sum(y))
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!report.passed());
        assert!(!report.flagged.is_empty());
    }

    #[test]
    fn non_finite_loss_is_a_domain_error() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::vector(vec![1.0]));
        let err = grad_check(
            &mut store,
            |g, s| {
                let w = g.param(s, id);
                Ok(g.scale(w, f64::INFINITY))
            },
            1e-5,
            1e-4,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
