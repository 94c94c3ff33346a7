//! Entity-aware attention pooling with latent entity typing.
//!
//! For entity j with hidden state h_ej, the type weights are
//! a = softmax(h_ej · c_k) over the K type vectors and t_j = Σ a_k c_k.
//! Each position then scores
//!
//! ```text
//! u_i = tanh(W_H [h_i; p1_i; p2_i] + W_E [h_e1; t_1; h_e2; t_2])
//! α   = softmax(v · u_i) over unmasked positions
//! z   = Σ α_i h_i
//! ```
//!
//! The W_E term does not depend on i; it is computed once and added to
//! every row.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Rng, Tensor, Var};
use crate::scalar::Scalar;
use crate::selfattn::gaussian;

#[derive(Debug, Clone, PartialEq)]
pub struct LetParams {
    /// [K × 2d_h], one type vector per row.
    pub types: ParamId,
}

impl LetParams {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let types = store.add("let.types", gaussian(cfg.k, 2 * cfg.d_h, cfg.init_std, rng))?;
        Ok(Self { types })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityAttnParams {
    /// [d_a × (2d_h + 2d_p)]
    pub w_h: ParamId,
    /// [d_a × 8d_h]
    pub w_e: ParamId,
    /// [d_a]
    pub v: ParamId,
    pub bias: Option<ParamId>,
}

impl EntityAttnParams {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let w_h = store.add(
            "entity.w_h",
            gaussian(cfg.d_a, 2 * cfg.d_h + 2 * cfg.d_p, cfg.init_std, rng),
        )?;
        let w_e = store.add("entity.w_e", gaussian(cfg.d_a, 8 * cfg.d_h, cfg.init_std, rng))?;
        let v = gaussian::<T>(1, cfg.d_a, cfg.init_std, rng).into_data();
        let v = store.add("entity.v", Tensor::vector(v))?;
        let bias = if cfg.entity_bias {
            Some(store.add("entity.bias", Tensor::zeros(vec![cfg.d_a]))?)
        } else {
            None
        };
        Ok(Self { w_h, w_e, v, bias })
    }
}

/// Graph nodes for one pooled sentence. Vectors are single rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledSentence {
    /// [1 × 2d_h]
    pub z: Var,
    /// [1 × n], zero at masked positions.
    pub alpha: Var,
    pub t1: Var,
    pub t2: Var,
    /// [1 × K]
    pub a1: Var,
    pub a2: Var,
}

/// Type representation of one entity. `h_e` is [1 × 2d_h] and `types`
/// is [K × 2d_h]. Returns (t [1 × 2d_h], a [1 × K]).
pub fn latent_type<T: Scalar>(g: &mut Graph<'_, T>, h_e: Var, types: Var) -> Result<(Var, Var)> {
    let k = g.dims(types).0;
    let scores = g.matmul_bt(h_e, types)?;
    let a = g.masked_softmax(scores, &vec![true; k])?;
    let t = g.matmul(a, types)?;
    Ok((t, a))
}

/// The entity term W_E [h_e1; t_1; h_e2; t_2] (plus the optional bias).
fn entity_term<T: Scalar>(g: &mut Graph<'_, T>, parts: [Var; 4], params: &EntityAttnParams) -> Result<Var> {
    let cat = g.concat_cols(&parts)?;
    let w_e = g.param(params.w_e);
    let mut e = g.matmul_bt(cat, w_e)?;
    if let Some(b) = params.bias {
        let b = g.param(b);
        e = g.add(e, b)?;
    }
    Ok(e)
}

/// Pools `h` ([n × 2d_h]) into z. `p1`, `p2` are the [n × d_p] position
/// features relative to each entity; `e1`, `e2` index the entity tokens.
#[allow(clippy::too_many_arguments)]
pub fn entity_attention<T: Scalar>(
    g: &mut Graph<'_, T>,
    h: Var,
    p1: Var,
    p2: Var,
    e1: usize,
    e2: usize,
    params: &EntityAttnParams,
    let_params: &LetParams,
    mask: &[bool],
) -> Result<PooledSentence> {
    let n = g.dims(h).0;
    if mask.len() != n {
        return Err(Error::shape(format!("mask of {} for {n} positions", mask.len())));
    }
    for e in [e1, e2] {
        if e >= n {
            return Err(Error::Index {
                what: "entity position",
                index: e,
                size: n,
            });
        }
        if !mask[e] {
            return Err(Error::InvalidArgument(format!("entity position {e} is masked")));
        }
    }
    let types = g.param(let_params.types);
    let h1 = g.slice_rows(h, e1, 1)?;
    let h2 = g.slice_rows(h, e2, 1)?;
    let (t1, a1) = latent_type(g, h1, types)?;
    let (t2, a2) = latent_type(g, h2, types)?;
    let e = entity_term(g, [h1, t1, h2, t2], params)?;

    let x = g.concat_cols(&[h, p1, p2])?;
    let w_h = g.param(params.w_h);
    let local = g.matmul_bt(x, w_h)?;
    let pre = g.add_row(local, e)?;
    let u = g.tanh(pre);
    let v = g.param(params.v);
    let scores = g.matmul_bt(v, u)?;
    let alpha = g.masked_softmax(scores, mask)?;
    let z = g.matmul(alpha, h)?;
    Ok(PooledSentence {
        z,
        alpha,
        t1,
        t2,
        a1,
        a2,
    })
}
