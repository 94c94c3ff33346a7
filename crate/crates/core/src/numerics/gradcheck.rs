//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::numerics::graph::{Graph, Var};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Perturbation half-width.
    pub h: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { h: 1e-5, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<Mismatch>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.checked += other.checked;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.failures.extend(other.failures);
    }
}

/// |a − n| / (|a| + |n| + 1e-8)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-8)
}

/// Compares analytic against numeric gradients element by element.
pub fn compare(analytic: &[f64], numeric: &[f64], tol: f64) -> CheckReport {
    let mut report = CheckReport {
        checked: analytic.len(),
        ..Default::default()
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = relative_error(a, n);
        report.max_rel_error = report.max_rel_error.max(rel);
        if rel > tol || !rel.is_finite() {
            report.failures.push(Mismatch {
                index: i,
                analytic: a,
                numeric: n,
                rel_error: rel,
            });
        }
    }
    report
}

/// Central differences of `f` at `theta`, restricted to `indices` when given.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> Result<f64>, theta: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut x = theta.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x)?;
        x[i] = orig - h;
        let minus = f(&x)?;
        x[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Checks `f`, which returns its value and analytic gradient at a point,
/// against central differences around `theta`. `f` must be deterministic.
pub fn finite_diff_check(
    mut f: impl FnMut(&Tensor<f64>) -> Result<(f64, Vec<f64>)>,
    theta: &Tensor<f64>,
    opts: &CheckOptions,
) -> Result<CheckReport> {
    let (_, analytic) = f(theta)?;
    let shape = theta.shape().to_vec();
    let numeric = numeric_gradient(
        |x| Ok(f(&Tensor::new(shape.clone(), x.to_vec())?)?.0),
        theta.data(),
        opts.h,
    )?;
    Ok(compare(&analytic, &numeric, opts.tol))
}

/// Checks the gradient of a scalar graph function w.r.t. one input tensor.
pub fn check_input(
    x: &Tensor<f64>,
    build: impl Fn(&mut Graph<f64>, Var) -> Result<Var>,
    opts: &CheckOptions,
) -> Result<CheckReport> {
    finite_diff_check(
        |t| {
            let mut g = Graph::new();
            let v = g.input_with_grad(t.clone());
            let out = build(&mut g, v)?;
            let value = g.scalar_value(out);
            g.backward(out)?;
            let grad = g
                .grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()]);
            Ok((value, grad))
        },
        x,
        opts,
    )
}

/// Checks `build`'s gradient w.r.t. one input tensor while parameters are
/// read from `store`.
pub fn check_input_in(
    store: &ParamStore<f64>,
    x: &Tensor<f64>,
    build: impl for<'g> Fn(&mut Graph<'g, f64>, Var) -> Result<Var>,
    opts: &CheckOptions,
) -> Result<CheckReport> {
    finite_diff_check(
        |t| {
            let mut g = Graph::with_params(store);
            let v = g.input_with_grad(t.clone());
            let out = build(&mut g, v)?;
            let value = g.scalar_value(out);
            g.backward(out)?;
            let grad = g
                .grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()]);
            Ok((value, grad))
        },
        x,
        opts,
    )
}

/// Checks the gradient of `build` w.r.t. each parameter in `ids`, every
/// element perturbed in turn.
pub fn check_params(
    store: &ParamStore<f64>,
    ids: &[ParamId],
    build: impl for<'g> Fn(&mut Graph<'g, f64>) -> Result<Var>,
    opts: &CheckOptions,
) -> Result<Vec<(ParamId, CheckReport)>> {
    let grads = {
        let mut g = Graph::with_params(store);
        let out = build(&mut g)?;
        g.backward(out)?
    };
    let mut work = store.clone();
    let mut reports = Vec::with_capacity(ids.len());
    for &id in ids {
        let analytic = grads.dense(id);
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let orig = work.value(id).data()[i];
            let mut eval = |v: f64| -> Result<f64> {
                work.get_mut(id).value.data_mut()[i] = v;
                let mut g = Graph::with_params(&work);
                let out = build(&mut g)?;
                Ok(g.scalar_value(out))
            };
            let plus = eval(orig + opts.h)?;
            let minus = eval(orig - opts.h)?;
            work.get_mut(id).value.data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * opts.h));
        }
        reports.push((id, compare(&analytic, &numeric, opts.tol)));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let r = finite_diff_check(
            |t| {
                let x = t.data()[0];
                Ok((x * x, vec![2.0 * x]))
            },
            &Tensor::vector(vec![3.0]),
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed());
        let n = numeric_gradient(|x| Ok(x[0] * x[0]), &[3.0], 1e-5).unwrap();
        assert!((n[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let n = numeric_gradient(|_| Ok(4.2), &[1.0, -2.0], 1e-5).unwrap();
        assert_eq!(n, vec![0.0, 0.0]);
        let r = compare(&[0.0, 0.0], &n, 1e-12);
        assert!(r.passed());
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let r = finite_diff_check(
            |t| {
                let x = t.data()[0];
                Ok((x * x, vec![3.0 * x]))
            },
            &Tensor::vector(vec![3.0]),
            &CheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.failures.len(), 1);
    }

    #[test]
    fn masked_softmax_row_gradient() {
        // Weighted sum of a softmax row; weights make the gradient non-trivial.
        let x = Tensor::matrix(1, 4, vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let r = check_input(
            &x,
            |g, v| {
                let s = g.masked_softmax(v, &[true, true, false, true])?;
                let w = g.input(Tensor::matrix(1, 4, vec![1.0, -2.0, 5.0, 0.5])?);
                let p = g.mul(s, w)?;
                Ok(g.sum(p))
            },
            &CheckOptions { h: 1e-5, tol: 1e-6 },
        )
        .unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
