//! Bidirectional LSTM over the self-attention output.
//!
//! Each direction is a standard LSTM without peepholes:
//!
//! ```text
//! [i f g o] = W_ih x_t + W_hh h_{t-1} + b
//! c_t = σ(f) ⊙ c_{t-1} + σ(i) ⊙ tanh(g)
//! h_t = σ(o) ⊙ tanh(c_t)
//! ```
//!
//! with h_0 = c_0 = 0. The backward direction starts at the last real
//! token, not at the padded end.

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Rng, Tensor, Var};
use crate::scalar::Scalar;
use crate::selfattn::gaussian;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// [4d_h × d_in], gate blocks in order input, forget, cell, output.
    pub w_ih: ParamId,
    /// [4d_h × d_h]
    pub w_hh: ParamId,
    /// [4d_h]
    pub bias: ParamId,
    pub d_h: usize,
}

impl LstmParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        d_in: usize,
        d_h: usize,
        init_std: f64,
        forget_bias: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w_ih = store.add(format!("{prefix}.w_ih"), gaussian(4 * d_h, d_in, init_std, rng))?;
        let w_hh = store.add(format!("{prefix}.w_hh"), gaussian(4 * d_h, d_h, init_std, rng))?;
        let mut b = vec![T::zero(); 4 * d_h];
        b[d_h..2 * d_h].fill(T::from_f64_lossy(forget_bias));
        let bias = store.add(format!("{prefix}.bias"), Tensor::vector(b))?;
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            d_h,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BlstmParams {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let fwd = LstmParams::init(
            store,
            "lstm.fwd",
            cfg.d_w,
            cfg.d_h,
            cfg.init_std,
            cfg.forget_bias,
            rng,
        )?;
        let bwd = LstmParams::init(
            store,
            "lstm.bwd",
            cfg.d_w,
            cfg.d_h,
            cfg.init_std,
            cfg.forget_bias,
            rng,
        )?;
        Ok(Self { fwd, bwd })
    }
}

/// One step from the input projection `pre_x` = W_ih x_t ([1 × 4d_h]).
fn cell_from_projection<T: Scalar>(
    g: &mut Graph<'_, T>,
    pre_x: Var,
    state: Option<(Var, Var)>,
    p: &LstmParams,
) -> Result<(Var, Var)> {
    let d = p.d_h;
    let mut pre = pre_x;
    if let Some((h_prev, _)) = state {
        let w_hh = g.param(p.w_hh);
        let rec = g.matmul_bt(h_prev, w_hh)?;
        pre = g.add(pre, rec)?;
    }
    let bias = g.param(p.bias);
    let pre = g.add_row(pre, bias)?;
    let i = g.slice_cols(pre, 0, d)?;
    let i = g.sigmoid(i);
    let cand = g.slice_cols(pre, 2 * d, d)?;
    let cand = g.tanh(cand);
    let o = g.slice_cols(pre, 3 * d, d)?;
    let o = g.sigmoid(o);
    let mut c = g.mul(i, cand)?;
    if let Some((_, c_prev)) = state {
        let f = g.slice_cols(pre, d, d)?;
        let f = g.sigmoid(f);
        let carried = g.mul(f, c_prev)?;
        c = g.add(carried, c)?;
    }
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// A single LSTM step on `x` ([1 × d_in]). `state` is (h_prev, c_prev);
/// `None` means both are zero.
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    state: Option<(Var, Var)>,
    p: &LstmParams,
) -> Result<(Var, Var)> {
    let w_ih = g.param(p.w_ih);
    let pre_x = g.matmul_bt(x, w_ih)?;
    cell_from_projection(g, pre_x, state, p)
}

/// Runs one direction over the first `length` rows of `m`. Returns the
/// hidden states in sentence order, [length × d_h].
fn run_direction<T: Scalar>(
    g: &mut Graph<'_, T>,
    m: Var,
    length: usize,
    p: &LstmParams,
    reverse: bool,
) -> Result<Var> {
    let w_ih = g.param(p.w_ih);
    let proj = g.matmul_bt(m, w_ih)?;
    let mut hs = Vec::with_capacity(length);
    let mut state = None;
    let steps: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..length).rev())
    } else {
        Box::new(0..length)
    };
    for t in steps {
        let pre_x = g.slice_rows(proj, t, 1)?;
        let (h, c) = cell_from_projection(g, pre_x, state, p)?;
        hs.push(h);
        state = Some((h, c));
    }
    if reverse {
        hs.reverse();
    }
    g.concat_rows(&hs)
}

/// H = [→h_t ; ←h_t] for t < `length`, zero rows for the padding after it.
/// `m` is [n × d_in] with n ≥ `length` ≥ 1.
pub fn blstm_encode<T: Scalar>(
    g: &mut Graph<'_, T>,
    m: Var,
    length: usize,
    params: &BlstmParams,
) -> Result<Var> {
    let n = g.dims(m).0;
    if length == 0 || length > n {
        return Err(Error::InvalidArgument(format!(
            "sequence length {length} for {n} rows"
        )));
    }
    let valid = if length < n {
        g.slice_rows(m, 0, length)?
    } else {
        m
    };
    let fwd = run_direction(g, valid, length, &params.fwd, false)?;
    let bwd = run_direction(g, valid, length, &params.bwd, true)?;
    let h = g.concat_cols(&[fwd, bwd])?;
    if length == n {
        return Ok(h);
    }
    let width = 2 * params.fwd.d_h;
    let pad = g.constant(vec![n - length, width], vec![T::zero(); (n - length) * width])?;
    g.concat_rows(&[h, pad])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{check_input_in, check_params, CheckOptions};

    fn setup(d_in: usize, d_h: usize, seed: u64, std: f64) -> (ParamStore<f64>, BlstmParams, Rng) {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let fwd = LstmParams::init(&mut store, "f", d_in, d_h, std, 1.0, &mut rng).unwrap();
        let bwd = LstmParams::init(&mut store, "b", d_in, d_h, std, 1.0, &mut rng).unwrap();
        (store, BlstmParams { fwd, bwd }, rng)
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Gate-by-gate scalar evaluation of one LSTM step.
    fn scalar_cell(
        store: &ParamStore<f64>,
        p: &LstmParams,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let d = p.d_h;
        let (wi, wh, b) = (store.value(p.w_ih), store.value(p.w_hh), store.value(p.bias));
        let pre = |row: usize| -> f64 {
            let mut s = b.data()[row];
            for (j, &xj) in x.iter().enumerate() {
                s += wi.at(row, j) * xj;
            }
            for (j, &hj) in h.iter().enumerate() {
                s += wh.at(row, j) * hj;
            }
            s
        };
        let mut hn = vec![0.0; d];
        let mut cn = vec![0.0; d];
        for u in 0..d {
            let i = sig(pre(u));
            let f = sig(pre(d + u));
            let gc = pre(2 * d + u).tanh();
            let o = sig(pre(3 * d + u));
            cn[u] = f * c[u] + i * gc;
            hn[u] = o * cn[u].tanh();
        }
        (hn, cn)
    }

    #[test]
    fn zero_weights_fixed_point() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams {
            w_ih: store.add("a", Tensor::zeros(vec![8, 3])).unwrap(),
            w_hh: store.add("b", Tensor::zeros(vec![8, 2])).unwrap(),
            bias: store.add("c", Tensor::zeros(vec![8])).unwrap(),
            d_h: 2,
        };
        let mut g = Graph::with_params(&store);
        let x = g.input(Tensor::matrix(1, 3, vec![0.4, -1.0, 2.0]).unwrap());
        let (h, c) = lstm_cell(&mut g, x, None, &p).unwrap();
        assert_eq!(g.value(h), &[0.0, 0.0]);
        assert_eq!(g.value(c), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_carries_memory() {
        let mut store = ParamStore::<f64>::new();
        let mut b = vec![0.0; 8];
        b[..2].fill(-40.0); // input gate shut
        b[2..4].fill(40.0); // forget gate open
        let p = LstmParams {
            w_ih: store.add("a", Tensor::zeros(vec![8, 1])).unwrap(),
            w_hh: store.add("b", Tensor::zeros(vec![8, 2])).unwrap(),
            bias: store.add("c", Tensor::vector(b)).unwrap(),
            d_h: 2,
        };
        let mut g = Graph::with_params(&store);
        let x = g.input(Tensor::matrix(1, 1, vec![3.0]).unwrap());
        let h0 = g.input(Tensor::matrix(1, 2, vec![0.1, 0.2]).unwrap());
        let c0 = g.input(Tensor::matrix(1, 2, vec![0.7, -0.3]).unwrap());
        let (_, c) = lstm_cell(&mut g, x, Some((h0, c0)), &p).unwrap();
        assert!((g.value(c)[0] - 0.7).abs() < 1e-12);
        assert!((g.value(c)[1] + 0.3).abs() < 1e-12);
    }

    #[test]
    fn matches_scalar_oracle() {
        let (store, p, mut rng) = setup(3, 2, 21, 0.8);
        let x: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
        let h: Vec<f64> = (0..2).map(|_| rng.normal(0.0, 1.0)).collect();
        let c: Vec<f64> = (0..2).map(|_| rng.normal(0.0, 1.0)).collect();
        let (he, ce) = scalar_cell(&store, &p.fwd, &x, &h, &c);
        let mut g = Graph::with_params(&store);
        let xv = g.input(Tensor::matrix(1, 3, x).unwrap());
        let hv = g.input(Tensor::matrix(1, 2, h).unwrap());
        let cv = g.input(Tensor::matrix(1, 2, c).unwrap());
        let (hn, cn) = lstm_cell(&mut g, xv, Some((hv, cv)), &p.fwd).unwrap();
        for u in 0..2 {
            assert!((g.value(hn)[u] - he[u]).abs() < 1e-12);
            assert!((g.value(cn)[u] - ce[u]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_sees_only_first_input() {
        let (store, p, mut rng) = setup(3, 2, 4, 0.5);
        let m: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
        let (hf, _) = scalar_cell(&store, &p.fwd, &m, &[0.0; 2], &[0.0; 2]);
        let (hb, _) = scalar_cell(&store, &p.bwd, &m, &[0.0; 2], &[0.0; 2]);
        let mut g = Graph::with_params(&store);
        let mv = g.input(Tensor::matrix(1, 3, m).unwrap());
        let h = blstm_encode(&mut g, mv, 1, &p).unwrap();
        let expected: Vec<f64> = hf.into_iter().chain(hb).collect();
        for (a, b) in g.value(h).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn tied_directions_on_palindrome_mirror() {
        let (store, p, mut rng) = setup(3, 2, 8, 0.5);
        let tied = BlstmParams {
            fwd: p.fwd.clone(),
            bwd: p.fwd.clone(),
        };
        let a: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.normal(0.0, 1.0)).collect();
        let rows = vec![a.clone(), b.clone(), c, b, a];
        let mut g = Graph::with_params(&store);
        let m = g.input(Tensor::from_rows(&rows).unwrap());
        let h = blstm_encode(&mut g, m, 5, &tied).unwrap();
        let hv = g.value(h);
        for t in 0..5 {
            for u in 0..2 {
                let fwd_t = hv[t * 4 + u];
                let bwd_mirror = hv[(4 - t) * 4 + 2 + u];
                assert_eq!(fwd_t, bwd_mirror);
            }
        }
    }

    #[test]
    fn output_shape() {
        let (store, p, mut rng) = setup(5, 6, 1, 0.1);
        let mut g = Graph::with_params(&store);
        let m = g.input(gaussian(7, 5, 1.0, &mut rng));
        let h = blstm_encode(&mut g, m, 7, &p).unwrap();
        assert_eq!(g.shape(h), &[7, 12]);
    }

    #[test]
    fn padding_leaves_valid_rows_unchanged() {
        let (store, p, mut rng) = setup(3, 4, 13, 0.5);
        let m = gaussian::<f64>(4, 3, 1.0, &mut rng);
        let mut g = Graph::with_params(&store);
        let mv = g.input(m.clone());
        let h = blstm_encode(&mut g, mv, 4, &p).unwrap();
        for extra in 1..=10 {
            let mut rows = m.to_rows();
            for _ in 0..extra {
                rows.push((0..3).map(|_| rng.normal(0.0, 1.0)).collect());
            }
            let padded = g.input(Tensor::from_rows(&rows).unwrap());
            let hp = blstm_encode(&mut g, padded, 4, &p).unwrap();
            let (hv, hpv) = (g.value(h).to_vec(), g.value(hp));
            assert_eq!(&hpv[..hv.len()], &hv[..]);
            assert!(hpv[hv.len()..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn long_sequence_gradients() {
        let (store, p, mut rng) = setup(3, 3, 17, 0.6);
        let m = gaussian::<f64>(12, 3, 1.0, &mut rng);
        let opts = CheckOptions::default();
        let objective = |g: &mut Graph<'_, f64>, mv: Var| -> Result<Var> {
            let h = blstm_encode(g, mv, 11, &p)?;
            let w = g.input(gaussian(12, 6, 1.0, &mut Rng::new(3)));
            let prod = g.mul(h, w)?;
            Ok(g.sum(prod))
        };
        let r = check_input_in(&store, &m, objective, &opts).unwrap();
        assert!(r.passed(), "{r:?}");
        let ids: Vec<ParamId> = store.ids().collect();
        for (id, r) in check_params(
            &store,
            &ids,
            |g| {
                let mv = g.input(m.clone());
                objective(g, mv)
            },
            &opts,
        )
        .unwrap()
        {
            assert!(r.passed(), "{}: {r:?}", store.get(id).name);
        }
    }

    #[test]
    fn forget_bias_initialised_to_one() {
        let (store, p, _) = setup(2, 3, 0, 0.1);
        assert_eq!(
            store.value(p.fwd.bias).data(),
            &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]
        );
    }
}
