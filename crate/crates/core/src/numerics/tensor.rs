use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Dense row-major tensor of rank 0, 1 or 2.
///
/// Every constructor and operation rejects NaN/Inf, so a `Tensor` that exists
/// holds only finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// How the right-hand operand of a binary op is expanded to the left shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    /// rhs `[m]` or `[1, m]` repeated over the rows of lhs `[n, m]`.
    Row,
    /// rhs holds a single value.
    Scalar,
}

impl Broadcast {
    pub(crate) fn resolve(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<Self> {
        if lhs == rhs {
            return Ok(Broadcast::Same);
        }
        let rhs_numel: usize = rhs.iter().product();
        if rhs_numel == 1 && rhs.len() <= 1 {
            return Ok(Broadcast::Scalar);
        }
        if lhs.len() == 2 {
            let m = lhs[1];
            let row = (rhs.len() == 1 && rhs[0] == m) || (rhs.len() == 2 && rhs[0] == 1 && rhs[1] == m);
            if row {
                return Ok(Broadcast::Row);
            }
        }
        Err(Error::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() })
    }

    #[inline]
    pub(crate) fn index(self, i: usize, cols: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Row => i % cols,
            Broadcast::Scalar => 0,
        }
    }
}

pub(crate) fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.len() > 2 {
            return Err(Error::invalid(format!("rank {} tensors are not supported", shape.len())));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::LengthMismatch { op: "Tensor::new", expected: numel, actual: data.len() });
        }
        check_finite("Tensor::new", &data)?;
        Ok(Tensor { shape, data })
    }

    /// Skips validation; callers guarantee shape and finiteness.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn scalar(v: T) -> Result<Self> {
        Self::new(vec![], vec![v])
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Stacks equal-length rows into an `[n, m]` matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::LengthMismatch { op: "Tensor::from_rows", expected: cols, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// The single value of a scalar-shaped tensor.
    pub fn item(&self) -> Result<T> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::NonScalarLoss(self.shape.clone()))
        }
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    fn expect_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.len() {
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(Error::ShapeMismatch { op, lhs: self.shape.clone(), rhs: vec![] }),
        }
    }

    fn finished(shape: Vec<usize>, data: Vec<T>, op: &'static str) -> Result<Self> {
        check_finite(op, &data)?;
        Ok(Tensor { shape, data })
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (n, k) = self.expect_matrix("matmul")?;
        let (k2, m) = rhs.expect_matrix("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: self.shape.clone(), rhs: rhs.shape.clone() });
        }
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let brow = &rhs.data[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Self::finished(vec![n, m], out, "matmul")
    }

    pub fn transpose(&self) -> Result<Self> {
        let (n, m) = self.expect_matrix("transpose")?;
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Ok(Tensor::raw(vec![m, n], out))
    }

    fn zip_with(&self, rhs: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        let bc = Broadcast::resolve(op, &self.shape, &rhs.shape)?;
        let cols = self.cols();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &a)| f(a, rhs.data[bc.index(i, cols)]))
            .collect();
        Self::finished(self.shape.clone(), data, op)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn div(&self, rhs: &Self) -> Result<Self> {
        if rhs.data.iter().any(|&b| b == T::zero()) {
            return Err(Error::Domain("div"));
        }
        self.zip_with(rhs, "div", |a, b| a / b)
    }

    fn map(&self, op: &'static str, f: impl Fn(T) -> T) -> Result<Self> {
        Self::finished(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect(), op)
    }

    pub fn exp(&self) -> Result<Self> {
        self.map("exp", T::exp)
    }

    pub fn ln(&self) -> Result<Self> {
        if self.data.iter().any(|&v| v <= T::zero()) {
            return Err(Error::Domain("ln"));
        }
        self.map("ln", T::ln)
    }

    pub fn sqrt(&self) -> Result<Self> {
        if self.data.iter().any(|&v| v <= T::zero()) {
            return Err(Error::Domain("sqrt"));
        }
        self.map("sqrt", T::sqrt)
    }

    pub fn softplus(&self) -> Result<Self> {
        self.map("softplus", scalar::softplus)
    }

    pub fn tanh(&self) -> Result<Self> {
        self.map("tanh", T::tanh)
    }

    pub fn relu(&self) -> Result<Self> {
        self.map("relu", |v| v.max(T::zero()))
    }

    pub fn square(&self) -> Result<Self> {
        self.map("square", |v| v * v)
    }

    pub fn neg(&self) -> Result<Self> {
        self.map("neg", |v| -v)
    }

    pub fn scale(&self, c: T) -> Result<Self> {
        self.map("scale", |v| v * c)
    }

    pub fn add_scalar(&self, c: T) -> Result<Self> {
        self.map("add_scalar", |v| v + c)
    }

    /// Sum of all entries as a rank-0 tensor.
    pub fn sum(&self) -> Result<Self> {
        let s = self.data.iter().fold(T::zero(), |acc, &v| acc + v);
        Self::finished(vec![], vec![s], "sum")
    }

    pub fn mean(&self) -> Result<Self> {
        if self.data.is_empty() {
            return Err(Error::Empty("mean of an empty tensor"));
        }
        let s = self.data.iter().fold(T::zero(), |acc, &v| acc + v);
        Self::finished(vec![], vec![s / T::of(self.data.len() as f64)], "mean")
    }

    /// Column sums of an `[n, m]` matrix, giving `[m]`. Rows are added in index order.
    pub fn sum_rows(&self) -> Result<Self> {
        let (n, m) = self.expect_matrix("sum_rows")?;
        let mut out = vec![T::zero(); m];
        for i in 0..n {
            for (o, &v) in out.iter_mut().zip(&self.data[i * m..(i + 1) * m]) {
                *o = *o + v;
            }
        }
        Self::finished(vec![m], out, "sum_rows")
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("concat_cols"))?;
        let n = first.expect_matrix("concat_cols")?.0;
        let mut total = 0;
        for p in parts {
            let (pn, pm) = p.expect_matrix("concat_cols")?;
            if pn != n {
                return Err(Error::ShapeMismatch { op: "concat_cols", lhs: first.shape.clone(), rhs: p.shape.clone() });
            }
            total += pm;
        }
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Tensor::raw(vec![n, total], data))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self> {
        let (n, m) = self.expect_matrix("slice_cols")?;
        if start > end || end > m {
            return Err(Error::invalid(format!("slice_cols {start}..{end} out of range for {m} columns")));
        }
        let mut data = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            data.extend_from_slice(&self.data[i * m + start..i * m + end]);
        }
        Ok(Tensor::raw(vec![n, end - start], data))
    }

    /// Rows selected by `idx` (repeats allowed), as a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self> {
        let (n, m) = self.expect_matrix("gather_rows")?;
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in idx {
            if i >= n {
                return Err(Error::invalid(format!("row {i} out of range for {n} rows")));
            }
            data.extend_from_slice(&self.data[i * m..(i + 1) * m]);
        }
        Ok(Tensor::raw(vec![idx.len(), m], data))
    }

    /// Repeats a vector (or single-row matrix) `n` times as an `[n, m]` matrix.
    pub fn broadcast_rows(&self, n: usize) -> Result<Self> {
        let m = match self.shape.as_slice() {
            [m] => *m,
            [1, m] => *m,
            _ => return Err(Error::ShapeMismatch { op: "broadcast_rows", lhs: self.shape.clone(), rhs: vec![1] }),
        };
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n {
            data.extend_from_slice(&self.data);
        }
        Ok(Tensor::raw(vec![n, m], data))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() || shape.len() > 2 {
            return Err(Error::ShapeMismatch { op: "reshape", lhs: self.shape.clone(), rhs: shape });
        }
        Ok(Tensor::raw(shape, self.data.clone()))
    }
}
