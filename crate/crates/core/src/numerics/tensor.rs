use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array. Every tensor is viewed as a matrix whose column
/// count is the last extent and whose row count is the product of the rest;
/// a rank-0 or rank-1 tensor is a single row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a matrix from nested rows, all of equal width.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cols(&self) -> usize {
        matrix_dims(&self.shape).1
    }

    pub fn rows(&self) -> usize {
        matrix_dims(&self.shape).0
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols() + c]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows()).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect(),
        }
    }
}

/// (rows, cols) for the matrix view of `shape`.
pub fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    match shape.split_last() {
        None => (1, 1),
        Some((&c, rest)) => (rest.iter().product(), c),
    }
}

// Dense kernels. Accumulation order is fixed (ascending inner index) so
// repeated runs are bit-identical.

/// C[m×n] = A[m×k] · B[k×n]
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// C[m×n] = A[m×k] · B[n×k]ᵀ
pub fn matmul_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// C[k×n] = A[m×k]ᵀ · B[m×n]
pub fn matmul_at<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

pub fn transpose<T: Scalar>(a: &[T], m: usize, n: usize) -> Vec<T> {
    let mut t = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}

/// Row-wise softmax over the unmasked entries of each row; masked entries
/// are exactly zero. Uses max subtraction.
pub fn masked_softmax_rows<T: Scalar>(x: &[T], mask: &[bool], rows: usize, cols: usize) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        let xs = &x[r * cols..(r + 1) * cols];
        let ms = &mask[r * cols..(r + 1) * cols];
        let mut max = T::neg_infinity();
        let mut any = false;
        for (&v, &m) in xs.iter().zip(ms) {
            if m {
                any = true;
                if v > max {
                    max = v;
                }
            }
        }
        if !any {
            return Err(Error::FullyMasked { row: r });
        }
        let os = &mut out[r * cols..(r + 1) * cols];
        let mut sum = T::zero();
        for ((o, &v), &m) in os.iter_mut().zip(xs).zip(ms) {
            if m {
                *o = (v - max).exp();
                sum += *o;
            }
        }
        for (o, &m) in os.iter_mut().zip(ms) {
            if m {
                *o /= sum;
            }
        }
    }
    Ok(out)
}

/// Standalone masked softmax on a tensor; the mask has the tensor's shape.
pub fn masked_softmax<T: Scalar>(x: &Tensor<T>, mask: &[bool]) -> Result<Tensor<T>> {
    if mask.len() != x.len() {
        return Err(Error::shape(format!(
            "mask has {} entries, tensor has {}",
            mask.len(),
            x.len()
        )));
    }
    let (rows, cols) = matrix_dims(x.shape());
    let data = masked_softmax_rows(x.data(), mask, rows, cols)?;
    Tensor::new(x.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_pair() {
        let x = Tensor::vector(vec![0.0_f64, 0.0]);
        let y = masked_softmax(&x, &[true, true]).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_single_live_entry() {
        let x = Tensor::vector(vec![5.0_f64, -100.0]);
        let y = masked_softmax(&x, &[true, false]).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_three_values() {
        // e^1, e^2, e^3 normalised by hand.
        let e: Vec<f64> = [1.0_f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        let x = Tensor::vector(vec![1.0_f64, 2.0, 3.0]);
        let y = masked_softmax(&x, &[true; 3]).unwrap();
        let expected = [0.09003, 0.24473, 0.66524];
        for i in 0..3 {
            assert!((y.data()[i] - expected[i]).abs() < 1e-5);
            assert!((y.data()[i] - e[i] / s).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_fully_masked_row_is_error() {
        let x = Tensor::matrix(2, 2, vec![1.0_f64, 2.0, 3.0, 4.0]).unwrap();
        let err = masked_softmax(&x, &[true, false, false, false]).unwrap_err();
        assert!(matches!(err, Error::FullyMasked { row: 1 }));
    }

    #[test]
    fn softmax_extreme_logits_stay_finite() {
        let x = Tensor::vector(vec![1e4_f64, -1e4, 0.0]);
        let y = masked_softmax(&x, &[true; 3]).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite()));
        assert_eq!(y.data()[0], 1.0);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = vec![1.0_f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = vec![7.0_f64, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let c = matmul(&a, &b, 2, 3, 2);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);
        let bt = transpose(&b, 3, 2);
        assert_eq!(matmul_bt(&a, &bt, 2, 3, 2), c);
        let at = transpose(&a, 2, 3);
        assert_eq!(matmul_at(&at, &b, 3, 2, 2), c);
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![0.0; 3]).is_err());
    }
}
