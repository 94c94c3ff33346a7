//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive applied during one forward pass in
//! creation order, which is already a topological order. [`Graph::backward`]
//! walks the record once in reverse and returns parameter gradients.
//! Parameter values are borrowed from a [`ParamStore`], never copied.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::params::{Gradients, ParamId, ParamStore};
use crate::numerics::tensor::{
    masked_softmax_rows, matmul, matmul_at, matmul_bt, matrix_dims, transpose, Tensor,
};
use crate::scalar::{lit, Scalar};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Deliberate corruption of a backward rule, for exercising the gradient
/// checker's negative path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales the tanh derivative by 1.5.
    TanhBackward,
    /// Omits the (1 - s) factor of the sigmoid derivative.
    SigmoidBackward,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    MaskedSoftmax(Var, Vec<bool>),
    Dropout(Var, Vec<T>),
    Sum(Var),
    SumSquares(Var),
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
        mean: bool,
    },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    // Empty for parameter nodes; their values live in the store.
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'p, T> {
    store: Option<&'p ParamStore<T>>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<T>>>,
    consumed: bool,
    fault: Option<Fault>,
}

impl<'p, T: Scalar> Default for Graph<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// A graph with no parameters; only inputs can be differentiated.
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            grads: Vec::new(),
            consumed: false,
            fault: None,
        }
    }

    pub fn with_params(store: &'p ParamStore<T>) -> Self {
        Self {
            store: Some(store),
            ..Self::new()
        }
    }

    pub fn inject_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == shape.iter().product::<usize>());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    /// Input whose gradient is retained by [`Graph::grad`].
    pub fn input_with_grad(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, true)
    }

    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<T>) -> Result<Var> {
        Ok(self.input(Tensor::new(shape, value)?))
    }

    /// Node for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.store.expect("graph was built without a parameter store");
        let p = store.get(id);
        let v = self.push(p.value.shape().to_vec(), Vec::new(), Op::Param(id), p.trainable);
        self.param_vars.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &[T] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.store.expect("parameter node without store").value(id).data(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        matrix_dims(&self.nodes[v.0].shape)
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("consistent node")
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.value(v)[0]
    }

    /// Gradient of the last backward pass w.r.t. `v`, if it received one.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    // ---- primitives -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape(format!("matmul [{m}x{k}]·[{k2}x{n}]")));
        }
        let out = matmul(self.value(a), self.value(b), m, k, n);
        let ng = self.ng(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`; `b` is typically a weight stored as [out × in].
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::shape(format!("matmul_bt [{m}x{k}]·[{n}x{k2}]ᵀ")));
        }
        let out = matmul_bt(self.value(a), self.value(b), m, k, n);
        let ng = self.ng(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMulBT(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let out = transpose(self.value(a), m, n);
        let ng = self.ng(&[a]);
        self.push(vec![n, m], out, Op::Transpose(a), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::shape(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a, b]);
        Ok(self.push(shape, out, Op::Add(a, b), ng))
    }

    /// Adds the single row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.value(b).len() != n {
            return Err(Error::shape(format!("add_row [{m}x{n}] + {:?}", self.shape(b))));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(av[i * n..(i + 1) * n].iter().zip(bv).map(|(&x, &y)| x + y));
        }
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a, b]);
        Ok(self.push(shape, out, Op::AddRow(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::shape(format!(
                "mul {:?} * {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a, b]);
        Ok(self.push(shape, out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).iter().map(|&x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a]);
        self.push(shape, out, Op::Scale(a, c), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a]);
        self.push(shape, out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a]);
        self.push(shape, out, Op::Sigmoid(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.dims(p).0,
            None => return Err(Error::shape("concat of nothing")),
        };
        if parts.iter().any(|&p| self.dims(p).0 != rows) {
            return Err(Error::shape("concat_cols with differing row counts"));
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let ng = self.ng(parts);
        Ok(self.push(vec![rows, total], out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = match parts.first() {
            Some(&p) => self.dims(p).1,
            None => return Err(Error::shape("concat of nothing")),
        };
        if parts.iter().any(|&p| self.dims(p).1 != cols) {
            return Err(Error::shape("concat_rows with differing column counts"));
        }
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            rows += self.dims(p).0;
            out.extend_from_slice(self.value(p));
        }
        let ng = self.ng(parts);
        Ok(self.push(vec![rows, cols], out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > m {
            return Err(Error::Index {
                what: "rows",
                index: start + len,
                size: m,
            });
        }
        let out = self.value(a)[start * n..(start + len) * n].to_vec();
        let ng = self.ng(&[a]);
        Ok(self.push(vec![len, n], out, Op::SliceRows(a, start, len), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(a);
        if start + len > n {
            return Err(Error::Index {
                what: "columns",
                index: start + len,
                size: n,
            });
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&av[r * n + start..r * n + start + len]);
        }
        let ng = self.ng(&[a]);
        Ok(self.push(vec![m, len], out, Op::SliceCols(a, start, len), ng))
    }

    /// Row lookup into a table (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (m, n) = self.dims(table);
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * n);
        for &id in ids {
            if id >= m {
                return Err(Error::Index {
                    what: "table rows",
                    index: id,
                    size: m,
                });
            }
            out.extend_from_slice(&tv[id * n..(id + 1) * n]);
        }
        let ng = self.ng(&[table]);
        Ok(self.push(vec![ids.len(), n], out, Op::GatherRows(table, ids.to_vec()), ng))
    }

    /// Softmax along the last axis over entries where `mask` is true.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let (m, n) = self.dims(a);
        if mask.len() != m * n {
            return Err(Error::shape(format!(
                "mask of {} entries for [{m}x{n}]",
                mask.len()
            )));
        }
        let out = masked_softmax_rows(self.value(a), mask, m, n)?;
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a]);
        Ok(self.push(shape, out, Op::MaskedSoftmax(a, mask.to_vec()), ng))
    }

    /// Elementwise multiply by a fixed keep/scale mask.
    pub fn dropout(&mut self, a: Var, keep_scale: Vec<T>) -> Result<Var> {
        if keep_scale.len() != self.value(a).len() {
            return Err(Error::shape("dropout mask size"));
        }
        let out = self
            .value(a)
            .iter()
            .zip(&keep_scale)
            .map(|(&x, &s)| x * s)
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a]);
        Ok(self.push(shape, out, Op::Dropout(a, keep_scale), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let mut s = T::zero();
        for &x in self.value(a) {
            s += x;
        }
        let ng = self.ng(&[a]);
        self.push(vec![], vec![s], Op::Sum(a), ng)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let mut s = T::zero();
        for &x in self.value(a) {
            s += x * x;
        }
        let ng = self.ng(&[a]);
        self.push(vec![], vec![s], Op::SumSquares(a), ng)
    }

    /// Fused log-softmax + negative log-likelihood over the rows of
    /// `logits`, summed (or averaged) over rows.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], mean: bool) -> Result<Var> {
        let (m, n) = self.dims(logits);
        if labels.len() != m {
            return Err(Error::shape(format!(
                "{} labels for {m} rows of logits",
                labels.len()
            )));
        }
        let lv = self.value(logits);
        let mut probs = Vec::with_capacity(m * n);
        let mut loss = T::zero();
        for (r, &y) in labels.iter().enumerate() {
            if y >= n {
                return Err(Error::Index {
                    what: "classes",
                    index: y,
                    size: n,
                });
            }
            let row = &lv[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for &x in row {
                z += (x - max).exp();
            }
            let lse = max + z.ln();
            loss += lse - row[y];
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        if mean && m > 0 {
            loss /= lit::<T>(m as f64);
        }
        let ng = self.ng(&[logits]);
        Ok(self.push(
            vec![],
            vec![loss],
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
                mean,
            },
            ng,
        ))
    }

    // ---- reverse pass -----------------------------------------------------

    /// Propagates d(loss)/d(node) for every node that needs a gradient and
    /// returns the parameter gradients. Runs at most once per graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let store = self.store;
        let mut out = match store {
            Some(s) => Gradients::for_store(s),
            None => Gradients::for_store(&ParamStore::new()),
        };
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads, &mut out)?;
            grads[i] = Some(g);
        }
        for (&id, &v) in &self.param_vars {
            if let Some(g) = &grads[v.0] {
                out.add_dense(id, g);
            }
        }
        self.grads = grads;
        Ok(out)
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
        out: &mut Gradients<T>,
    ) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.dims(a);
                let n = self.dims(b).1;
                if self.needs(a) {
                    let ga = matmul_bt(g, self.value(b), m, n, k);
                    self.acc(grads, a, &ga);
                }
                if self.needs(b) {
                    let gb = matmul_at(self.value(a), g, m, k, n);
                    self.acc(grads, b, &gb);
                }
            }
            &Op::MatMulBT(a, b) => {
                let (m, k) = self.dims(a);
                let n = self.dims(b).0;
                if self.needs(a) {
                    let ga = matmul(g, self.value(b), m, n, k);
                    self.acc(grads, a, &ga);
                }
                if self.needs(b) {
                    let gb = matmul_at(g, self.value(a), m, n, k);
                    self.acc(grads, b, &gb);
                }
            }
            &Op::Transpose(a) => {
                let (m, n) = self.dims(a);
                let ga = transpose(g, n, m);
                self.acc(grads, a, &ga);
            }
            &Op::Add(a, b) => {
                self.acc(grads, a, g);
                self.acc(grads, b, g);
            }
            &Op::AddRow(a, b) => {
                self.acc(grads, a, g);
                if self.needs(b) {
                    let n = self.value(b).len();
                    let mut gb = vec![T::zero(); n];
                    for row in g.chunks(n) {
                        for (acc, &v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    self.acc(grads, b, &gb);
                }
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    let ga: Vec<T> = g.iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, a, &ga);
                }
                if self.needs(b) {
                    let gb: Vec<T> = g.iter().zip(self.value(a)).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, b, &gb);
                }
            }
            &Op::Scale(a, c) => {
                let ga: Vec<T> = g.iter().map(|&x| x * c).collect();
                self.acc(grads, a, &ga);
            }
            &Op::Tanh(a) => {
                let bad = if self.fault == Some(Fault::TanhBackward) {
                    lit(1.5)
                } else {
                    T::one()
                };
                let ga: Vec<T> = g
                    .iter()
                    .zip(y)
                    .map(|(&d, &t)| d * (T::one() - t * t) * bad)
                    .collect();
                self.acc(grads, a, &ga);
            }
            &Op::Sigmoid(a) => {
                let ga: Vec<T> = if self.fault == Some(Fault::SigmoidBackward) {
                    g.iter().zip(y).map(|(&d, &s)| d * s).collect()
                } else {
                    g.iter().zip(y).map(|(&d, &s)| d * s * (T::one() - s)).collect()
                };
                self.acc(grads, a, &ga);
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = matrix_dims(&node.shape);
                let mut offset = 0;
                for &p in parts {
                    let c = self.dims(p).1;
                    if self.needs(p) {
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                        }
                        self.acc(grads, p, &gp);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.acc(grads, p, &g[offset..offset + len]);
                    offset += len;
                }
            }
            &Op::SliceRows(a, start, len) => {
                if self.needs(a) {
                    let (m, n) = self.dims(a);
                    let mut ga = vec![T::zero(); m * n];
                    ga[start * n..(start + len) * n].copy_from_slice(g);
                    self.acc(grads, a, &ga);
                }
            }
            &Op::SliceCols(a, start, len) => {
                if self.needs(a) {
                    let (m, n) = self.dims(a);
                    let mut ga = vec![T::zero(); m * n];
                    for r in 0..m {
                        ga[r * n + start..r * n + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    self.acc(grads, a, &ga);
                }
            }
            Op::GatherRows(table, ids) => {
                let table = *table;
                let (m, n) = self.dims(table);
                if let Op::Param(pid) = self.nodes[table.0].op {
                    for (r, &id) in ids.iter().enumerate() {
                        out.add_row(pid, id, &g[r * n..(r + 1) * n]);
                    }
                } else if self.needs(table) {
                    let mut gt = vec![T::zero(); m * n];
                    for (r, &id) in ids.iter().enumerate() {
                        for (acc, &v) in gt[id * n..(id + 1) * n].iter_mut().zip(&g[r * n..(r + 1) * n]) {
                            *acc += v;
                        }
                    }
                    self.acc(grads, table, &gt);
                }
            }
            Op::MaskedSoftmax(a, mask) => {
                let (m, n) = self.dims(*a);
                let mut ga = vec![T::zero(); m * n];
                for r in 0..m {
                    let ys = &y[r * n..(r + 1) * n];
                    let gs = &g[r * n..(r + 1) * n];
                    let mut dot = T::zero();
                    for (&yv, &gv) in ys.iter().zip(gs) {
                        dot += yv * gv;
                    }
                    for c in 0..n {
                        if mask[r * n + c] {
                            ga[r * n + c] = ys[c] * (gs[c] - dot);
                        }
                    }
                }
                self.acc(grads, *a, &ga);
            }
            Op::Dropout(a, keep) => {
                let ga: Vec<T> = g.iter().zip(keep).map(|(&d, &k)| d * k).collect();
                self.acc(grads, *a, &ga);
            }
            &Op::Sum(a) => {
                let ga = vec![g[0]; self.value(a).len()];
                self.acc(grads, a, &ga);
            }
            &Op::SumSquares(a) => {
                let two = lit::<T>(2.0);
                let ga: Vec<T> = self.value(a).iter().map(|&x| two * x * g[0]).collect();
                self.acc(grads, a, &ga);
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
                mean,
            } => {
                let (m, n) = self.dims(*logits);
                let mut scale = g[0];
                if *mean && m > 0 {
                    scale /= lit::<T>(m as f64);
                }
                let mut ga: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (r, &y) in labels.iter().enumerate() {
                    ga[r * n + y] -= scale;
                }
                self.acc(grads, *logits, &ga);
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, g: &[T]) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, &b) in existing.iter_mut().zip(g) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g.to_vec()),
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
