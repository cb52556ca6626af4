use rand::Rng;

use crate::error::{Result, TensorError};

/// Dense row-major f64 tensor. Plain value type; gradient tracking happens on
/// the [`crate::Tape`] that owns recorded copies of these.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            if row.len() != m {
                return Err(TensorError::ShapeMismatch {
                    op: "from_rows",
                    lhs: vec![n, m],
                    rhs: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![n, m], data)
    }

    /// Random entries from `dist_fn`, consumed in row-major order.
    pub fn from_fn_rng<R: Rng>(shape: &[usize], rng: &mut R, mut dist_fn: impl FnMut(&mut R) -> f64) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| dist_fn(rng)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.data.len() == 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element at a multi-dimensional index (row-major).
    pub fn at(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0usize;
        for (i, &x) in idx.iter().enumerate() {
            debug_assert!(x < self.shape[i]);
            flat = flat * self.shape[i] + x;
        }
        self.data[flat]
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                len: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Rows of a 2-D tensor as vectors; convenience for tests and glue code.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        assert_eq!(self.shape.len(), 2, "rows() requires a 2-D tensor");
        let (n, m) = (self.shape[0], self.shape[1]);
        (0..n).map(|i| self.data[i * m..(i + 1) * m].to_vec()).collect()
    }
}

/// Broadcast two shapes following the trailing-dimension rule.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let ndim = a.len().max(b.len());
    let mut out = vec![0usize; ndim];
    for i in 0..ndim {
        let da = dim_from_right(a, ndim - 1 - i);
        let db = dim_from_right(b, ndim - 1 - i);
        if da == db || da == 1 || db == 1 {
            out[i] = da.max(db);
        } else {
            return None;
        }
    }
    Some(out)
}

fn dim_from_right(shape: &[usize], pos_from_left: usize) -> usize {
    let ndim_out = pos_from_left + 1;
    if shape.len() >= ndim_out {
        // position counted from the left in the padded shape
        shape[shape.len() - ndim_out]
    } else {
        1
    }
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Map a flat index in `out_shape` to the flat index in `in_shape` under
/// broadcasting (size-1 dims of `in_shape` are pinned to 0).
pub fn broadcast_source_index(flat: usize, out_shape: &[usize], in_shape: &[usize]) -> usize {
    let out_strides = strides(out_shape);
    let mut src = 0usize;
    let offset = out_shape.len() - in_shape.len();
    let in_strides = strides(in_shape);
    for (i, (&dim, &stride)) in out_shape.iter().zip(&out_strides).enumerate() {
        let coord = (flat / stride) % dim;
        if i >= offset {
            let j = i - offset;
            if in_shape[j] != 1 {
                src += coord * in_strides[j];
            }
        }
    }
    src
}
