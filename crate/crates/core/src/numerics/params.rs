use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
    /// Rows held fixed by the optimizer (the PAD embedding row).
    pub frozen_rows: Vec<usize>,
}

/// Named, ordered collection of learnable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            trainable: true,
            frozen_rows: Vec::new(),
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Squared L2 norm over trainable parameters accepted by `filter`.
    pub fn sum_squares(&self, filter: impl Fn(&Parameter<T>) -> bool) -> T {
        let mut acc = T::zero();
        for p in self.params.iter().filter(|p| p.trainable && filter(p)) {
            for &v in p.value.data() {
                acc += v * v;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
enum GradBuf<T> {
    Dense(Vec<T>),
    /// Row contributions to a lookup table, keyed by row index.
    Rows(BTreeMap<usize, Vec<T>>),
}

/// Gradients keyed by parameter. Lookup tables receive sparse row
/// gradients; everything else is dense.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    bufs: Vec<Option<GradBuf<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn for_store(store: &ParamStore<T>) -> Self {
        Self {
            bufs: vec![None; store.len()],
            shapes: store
                .params
                .iter()
                .map(|p| (p.value.rows(), p.value.cols()))
                .collect(),
        }
    }

    pub fn add_dense(&mut self, id: ParamId, grad: &[T]) {
        let (r, c) = self.shapes[id.0];
        debug_assert_eq!(grad.len(), r * c);
        match &mut self.bufs[id.0] {
            slot @ None => *slot = Some(GradBuf::Dense(grad.to_vec())),
            Some(GradBuf::Dense(d)) => {
                for (a, &b) in d.iter_mut().zip(grad) {
                    *a += b;
                }
            }
            Some(GradBuf::Rows(_)) => {
                let mut d = self.take_dense(id);
                for (a, &b) in d.iter_mut().zip(grad) {
                    *a += b;
                }
                self.bufs[id.0] = Some(GradBuf::Dense(d));
            }
        }
    }

    pub fn add_row(&mut self, id: ParamId, row: usize, grad: &[T]) {
        let cols = self.shapes[id.0].1;
        match &mut self.bufs[id.0] {
            slot @ None => {
                let mut m = BTreeMap::new();
                m.insert(row, grad.to_vec());
                *slot = Some(GradBuf::Rows(m));
            }
            Some(GradBuf::Rows(m)) => {
                let entry = m.entry(row).or_insert_with(|| vec![T::zero(); cols]);
                for (a, &b) in entry.iter_mut().zip(grad) {
                    *a += b;
                }
            }
            Some(GradBuf::Dense(d)) => {
                for (a, &b) in d[row * cols..(row + 1) * cols].iter_mut().zip(grad) {
                    *a += b;
                }
            }
        }
    }

    fn take_dense(&mut self, id: ParamId) -> Vec<T> {
        let (r, c) = self.shapes[id.0];
        match self.bufs[id.0].take() {
            None => vec![T::zero(); r * c],
            Some(GradBuf::Dense(d)) => d,
            Some(GradBuf::Rows(m)) => {
                let mut d = vec![T::zero(); r * c];
                for (row, g) in m {
                    d[row * c..(row + 1) * c].copy_from_slice(&g);
                }
                d
            }
        }
    }

    /// Dense copy of a parameter's gradient (zeros when untouched).
    pub fn dense(&self, id: ParamId) -> Vec<T> {
        let (r, c) = self.shapes[id.0];
        match &self.bufs[id.0] {
            None => vec![T::zero(); r * c],
            Some(GradBuf::Dense(d)) => d.clone(),
            Some(GradBuf::Rows(m)) => {
                let mut d = vec![T::zero(); r * c];
                for (&row, g) in m {
                    d[row * c..(row + 1) * c].copy_from_slice(g);
                }
                d
            }
        }
    }

    /// Rows that received any contribution, for sparse table gradients.
    pub fn touched_rows(&self, id: ParamId) -> Option<Vec<usize>> {
        match &self.bufs[id.0] {
            Some(GradBuf::Rows(m)) => Some(m.keys().copied().collect()),
            _ => None,
        }
    }

    pub fn is_touched(&self, id: ParamId) -> bool {
        self.bufs[id.0].is_some()
    }

    /// Adds `other` into `self`. Merging in a fixed order keeps the result
    /// bit-identical across thread schedules.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (i, buf) in other.bufs.iter().enumerate() {
            let id = ParamId(i);
            match buf {
                None => {}
                Some(GradBuf::Dense(d)) => self.add_dense(id, d),
                Some(GradBuf::Rows(m)) => {
                    for (&row, g) in m {
                        self.add_row(id, row, g);
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for buf in self.bufs.iter_mut().flatten() {
            match buf {
                GradBuf::Dense(d) => d.iter_mut().for_each(|v| *v *= factor),
                GradBuf::Rows(m) => m
                    .values_mut()
                    .for_each(|g| g.iter_mut().for_each(|v| *v *= factor)),
            }
        }
    }

    /// Converts every buffer to dense storage and hands them out.
    pub fn into_dense(mut self) -> Vec<Vec<T>> {
        (0..self.bufs.len())
            .map(|i| self.take_dense(ParamId(i)))
            .collect()
    }

    pub fn squared_norm(&self) -> T {
        let mut acc = T::zero();
        for buf in self.bufs.iter().flatten() {
            match buf {
                GradBuf::Dense(d) => d.iter().for_each(|&v| acc += v * v),
                GradBuf::Rows(m) => m.values().for_each(|g| g.iter().for_each(|&v| acc += v * v)),
            }
        }
        acc
    }
}
