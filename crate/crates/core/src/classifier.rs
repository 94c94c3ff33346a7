//! Softmax output layer and the regularized objective.
//!
//! p(y | z) = softmax(W_O z + b_O). The objective is the cross-entropy
//! summed over the batch plus λ‖θ‖² (no ½), where θ covers the trainable
//! tensors. The penalty and its gradient 2λθ are applied outside the
//! graph.

use crate::config::ModelConfig;
use crate::embedding::is_embedding;
use crate::error::{Error, Result};
use crate::numerics::{Gradients, Graph, ParamId, ParamStore, Parameter, Rng, Tensor, Var};
use crate::scalar::Scalar;
use crate::selfattn::gaussian;

#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    /// [|R| × 2d_h]
    pub w: ParamId,
    /// [|R|]
    pub b: ParamId,
}

impl OutputParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w = store.add("output.w", gaussian(classes, 2 * cfg.d_h, cfg.init_std, rng))?;
        let b = store.add("output.b", Tensor::zeros(vec![classes]))?;
        Ok(Self { w, b })
    }
}

/// W_O z + b_O for each row of `z`.
pub fn logits<T: Scalar>(g: &mut Graph<'_, T>, z: Var, params: &OutputParams) -> Result<Var> {
    let w = g.param(params.w);
    let b = g.param(params.b);
    let l = g.matmul_bt(z, w)?;
    g.add_row(l, b)
}

/// Numerically stable softmax of one logit vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let mut total = T::zero();
    for &e in &exps {
        total += e;
    }
    exps.into_iter().map(|e| e / total).collect()
}

/// Class distribution for a single pooled vector `z` ([2d_h]).
pub fn predict_proba<T: Scalar>(store: &ParamStore<T>, params: &OutputParams, z: &[T]) -> Result<Vec<T>> {
    let mut g = Graph::with_params(store);
    let zv = g.input(Tensor::matrix(1, z.len(), z.to_vec())?);
    let l = logits(&mut g, zv, params)?;
    Ok(softmax(g.value(l)))
}

/// −Σ log p(y) over the rows of `logits` (averaged when `mean`).
pub fn cross_entropy<T: Scalar>(
    g: &mut Graph<'_, T>,
    logits: Var,
    labels: &[usize],
    mean: bool,
) -> Result<Var> {
    g.softmax_cross_entropy(logits, labels, mean)
}

/// The λ‖θ‖² term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Penalty {
    pub lambda: f64,
    pub include_embeddings: bool,
}

impl L2Penalty {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            lambda: cfg.l2,
            include_embeddings: cfg.l2_embeddings,
        }
    }

    fn covers<T>(&self, p: &Parameter<T>) -> bool {
        p.trainable && (self.include_embeddings || !is_embedding(&p.name))
    }

    pub fn value<T: Scalar>(&self, store: &ParamStore<T>) -> T {
        if self.lambda == 0.0 {
            return T::zero();
        }
        T::from_f64_lossy(self.lambda) * store.sum_squares(|p| self.covers(p))
    }

    /// Adds 2λθ to `grads` for every covered parameter.
    pub fn add_gradient<T: Scalar>(&self, store: &ParamStore<T>, grads: &mut Gradients<T>) {
        if self.lambda == 0.0 {
            return;
        }
        let two_lambda = T::from_f64_lossy(2.0 * self.lambda);
        for (id, p) in store.iter().filter(|(_, p)| self.covers(p)) {
            let g: Vec<T> = p.value.data().iter().map(|&v| two_lambda * v).collect();
            grads.add_dense(id, &g);
        }
    }
}

/// Cross-entropy from precomputed probabilities plus the penalty. Errors
/// when a label is out of range.
pub fn loss<T: Scalar>(
    probs: &[Vec<T>],
    labels: &[usize],
    store: &ParamStore<T>,
    l2: &L2Penalty,
) -> Result<T> {
    if probs.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} distributions for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = T::zero();
    for (p, &y) in probs.iter().zip(labels) {
        let py = *p.get(y).ok_or(Error::Index {
            what: "classes",
            index: y,
            size: p.len(),
        })?;
        total -= py.ln();
    }
    Ok(total + l2.value(store))
}
