use super::graph::{Graph, Var};
use super::tensor::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name, flat index, analytic value, numeric value.
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Checks the gradient of the scalar built by `f` against central
/// differences with step `eps`, for every element of every listed
/// parameter. `f` must be deterministic.
pub fn grad_check<F>(
    store: &mut ParamStore,
    params: &[ParamId],
    eps: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Var,
{
    assert!(eps > 0.0, "eps must be positive");
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, store);
        g.check_finite()?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let out = f(&mut g, store);
    g.check_finite()?;
    let grads = g.backward(out);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for &id in params {
        let n = store.value(id).len();
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(store);
            store.value_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(store);
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::NonFinite {
                    op: format!("finite difference of {}", store.get(id).name),
                });
            }
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[i]);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), i, analytic, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let r = grad_check(&mut store, &[x], 1e-5, |g, s| {
            let v = g.param(s, x);
            let sq = g.mul(v, v);
            g.sum(sq)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert!((r.worst.unwrap().2 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![1.0, 2.0]));
        let r = grad_check(&mut store, &[x], 1e-5, |g, _| {
            let c = g.constant(Tensor::scalar(4.0));
            g.sum(c)
        })
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.0001) - 1e-4 / 1.0001).abs() < 1e-12);
    }
}
