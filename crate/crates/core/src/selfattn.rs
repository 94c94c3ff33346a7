//! Multi-head scaled dot-product self-attention.
//!
//! For a sentence X (one word vector per row), head i computes
//! softmax(Q_i K_iᵀ · s) V_i where Q_i = X W_Q,iᵀ (likewise K_i, V_i). The
//! r head outputs are concatenated column-wise and mixed by W_M. The logit scale `s` is
//! 1/√d_w by default (1/√(d_w/r) with `per_head_scale`). There is no
//! residual path or normalization.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Rng, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttnParams {
    /// Per-head projections, each [d_w/r × d_w].
    pub w_q: Vec<ParamId>,
    pub w_k: Vec<ParamId>,
    pub w_v: Vec<ParamId>,
    /// Output mixing [d_w × d_w].
    pub w_m: ParamId,
}

impl SelfAttnParams {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let dk = cfg.head_dim();
        let mut proj = |store: &mut ParamStore<T>, kind: &str| -> Result<Vec<ParamId>> {
            (0..cfg.r)
                .map(|i| {
                    store.add(
                        format!("selfattn.w_{kind}.{i}"),
                        gaussian(dk, cfg.d_w, cfg.init_std, rng),
                    )
                })
                .collect()
        };
        let w_q = proj(store, "q")?;
        let w_k = proj(store, "k")?;
        let w_v = proj(store, "v")?;
        let w_m = store.add("selfattn.w_m", gaussian(cfg.d_w, cfg.d_w, cfg.init_std, rng))?;
        Ok(Self { w_q, w_k, w_v, w_m })
    }

    pub fn heads(&self) -> usize {
        self.w_q.len()
    }
}

pub(crate) fn gaussian<T: Scalar>(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64_lossy(rng.normal(0.0, std)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Logit scale for the configured variant.
pub fn attention_scale<T: Scalar>(cfg: &ModelConfig) -> T {
    let d = if cfg.per_head_scale {
        cfg.head_dim()
    } else {
        cfg.d_w
    };
    T::one() / T::from_f64_lossy(d as f64).sqrt()
}

/// softmax(Q Kᵀ · scale) V with keys masked by `key_mask` (one flag per
/// key row). Returns (output [n × d], weights [n × n]).
pub fn scaled_dot_attention<T: Scalar>(
    g: &mut Graph<'_, T>,
    q: Var,
    k: Var,
    v: Var,
    key_mask: &[bool],
    scale: T,
) -> Result<(Var, Var)> {
    let n_q = g.dims(q).0;
    let n_k = g.dims(k).0;
    if key_mask.len() != n_k {
        return Err(Error::shape(format!(
            "key mask of {} for {n_k} keys",
            key_mask.len()
        )));
    }
    let logits = g.matmul_bt(q, k)?;
    let logits = g.scale(logits, scale);
    let mask: Vec<bool> = (0..n_q).flat_map(|_| key_mask.iter().copied()).collect();
    let weights = g.masked_softmax(logits, &mask)?;
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

/// MultiHead(X, X, X). Returns M [n × d_w] and the per-head weights.
pub fn multi_head<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    params: &SelfAttnParams,
    key_mask: &[bool],
    scale: T,
) -> Result<(Var, Vec<Var>)> {
    let mut heads = Vec::with_capacity(params.heads());
    let mut weights = Vec::with_capacity(params.heads());
    for i in 0..params.heads() {
        let (wq, wk, wv) = (
            g.param(params.w_q[i]),
            g.param(params.w_k[i]),
            g.param(params.w_v[i]),
        );
        let q = g.matmul_bt(x, wq)?;
        let k = g.matmul_bt(x, wk)?;
        let v = g.matmul_bt(x, wv)?;
        let (h, w) = scaled_dot_attention(g, q, k, v, key_mask, scale)?;
        heads.push(h);
        weights.push(w);
    }
    let cat = g.concat_cols(&heads)?;
    let wm = g.param(params.w_m);
    let m = g.matmul_bt(cat, wm)?;
    Ok((m, weights))
}
