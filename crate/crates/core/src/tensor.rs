//! Dense multilinear algebra on Little-Endian (first-index-fastest) storage.
//!
//! Element `(i_1, ..., i_N)` of a tensor with dims `(I_1, ..., I_N)` lives at
//! linear offset `i_1 + i_2 I_1 + ... + i_N I_1 ... I_{N-1}` (0-based). With
//! this layout a mode-`n` unfolding is a pure stride manipulation: the block of
//! modes before `n` varies fastest, then mode `n`, then the block after it.
//!
//! All indices in this module are 0-based. File formats translate to and from
//! the 1-based convention at the boundary.

use std::fmt;
use std::ops::{Index, Range};

use crate::error::{Error, Result};

/// Largest tensor order accepted by [`Shape::new`].
pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    /// Builds a shape, rejecting orders above [`MAX_ORDER`] and element
    /// counts that overflow `usize`. A zero-length mode is allowed and yields
    /// an empty tensor (used for factorizations with no servers).
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.len() > MAX_ORDER {
            return Err(Error::shape(format!(
                "order {} exceeds the supported maximum {MAX_ORDER}",
                dims.len()
            )));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::shape(format!("element count of {dims:?} overflows")))?;
        Ok(Shape { dims })
    }

    pub fn scalar() -> Self {
        Shape { dims: Vec::new() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Number of elements, `prod(dims)`; 1 for a scalar.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut acc = 1;
        self.dims
            .iter()
            .map(|&d| {
                let s = acc;
                acc *= d;
                s
            })
            .collect()
    }

    /// Little-Endian linear offset of a multi-index.
    pub fn linear_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.order() {
            return Err(Error::shape(format!(
                "multi-index of length {} for a tensor of order {}",
                index.len(),
                self.order()
            )));
        }
        let mut offset = 0;
        let mut stride = 1;
        for (mode, (&i, &d)) in index.iter().zip(&self.dims).enumerate() {
            if i >= d {
                return Err(Error::Bounds {
                    mode,
                    index: i,
                    dim: d,
                });
            }
            offset += i * stride;
            stride *= d;
        }
        Ok(offset)
    }

    /// Inverse of [`Shape::linear_index`]; `linear` must be below `len()`.
    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        debug_assert!(linear < self.len());
        self.dims
            .iter()
            .map(|&d| {
                let i = linear % d;
                linear /= d;
                i
            })
            .collect()
    }

    /// Iterates over all multi-indices in linear order.
    pub fn indices(&self) -> MultiIndices {
        MultiIndices {
            dims: self.dims.clone(),
            next: if self.is_empty() {
                None
            } else {
                Some(vec![0; self.order()])
            },
        }
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::Mode {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// (product of dims before `mode`, dim of `mode`, product of dims after).
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.dims[..mode].iter().product();
        let right = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join("x"))
    }
}

pub struct MultiIndices {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for MultiIndices {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for (i, &d) in succ.iter_mut().zip(&self.dims) {
            *i += 1;
            if *i < d {
                carried = false;
                break;
            }
            *i = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// Column-major matrix, i.e. an order-2 tensor in Little-Endian layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::shape(format!(
                "{} entries cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::shape("ragged rows"));
        }
        Ok(Matrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r + self.rows * c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r + self.rows * c] = value;
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other.get(k, j);
                if b == 0.0 {
                    continue;
                }
                let a = self.column(k);
                let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
                for (d, &x) in dst.iter_mut().zip(a) {
                    *d += x * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by a vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (c, &x) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.column(c)) {
                *o += a * x;
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn into_tensor(self) -> DenseTensor {
        DenseTensor {
            shape: Shape {
                dims: vec![self.rows, self.cols],
            },
            data: self.data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "{} values cannot fill a tensor of shape {shape}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let data = vec![0.0; shape.len()];
        DenseTensor { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        DenseTensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let data = shape.indices().map(|idx| f(&idx)).collect();
        DenseTensor { shape, data }
    }

    /// Folds a Little-Endian vector into `shape`.
    pub fn from_vector(values: Vec<f64>, shape: Shape) -> Result<Self> {
        DenseTensor::new(shape, values)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.linear_index(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let at = self.shape.linear_index(index)?;
        self.data[at] = value;
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.require_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn require_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shapes {} and {} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Mode-`mode` unfolding: an `I_n x prod_{k != n} I_k` matrix whose
    /// columns are the mode-`n` fibers in Little-Endian order of the
    /// remaining modes.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.shape.check_mode(mode)?;
        let (left, dim, right) = self.shape.split(mode);
        let cols = left * right;
        let mut out = Matrix::zeros(dim, cols);
        for r in 0..right {
            for i in 0..dim {
                let src = left * (i + dim * r);
                for l in 0..left {
                    out.data[i + dim * (l + left * r)] = self.data[src + l];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(matrix: &Matrix, shape: Shape, mode: usize) -> Result<DenseTensor> {
        shape.check_mode(mode)?;
        if matrix.data.len() != shape.len() {
            return Err(Error::shape(format!(
                "{} values cannot be folded into shape {shape}",
                matrix.data.len()
            )));
        }
        let (left, dim, right) = shape.split(mode);
        if matrix.rows != dim {
            return Err(Error::shape(format!(
                "matrix has {} rows but mode {mode} of {shape} has size {dim}",
                matrix.rows
            )));
        }
        let mut data = vec![0.0; shape.len()];
        for r in 0..right {
            for i in 0..dim {
                let dst = left * (i + dim * r);
                for l in 0..left {
                    data[dst + l] = matrix.data[i + dim * (l + left * r)];
                }
            }
        }
        Ok(DenseTensor { shape, data })
    }

    /// Stacks equal-shape tensors along a new trailing mode.
    pub fn stack(tensors: &[DenseTensor]) -> Result<DenseTensor> {
        let first = tensors
            .first()
            .ok_or_else(|| Error::Argument("cannot stack an empty list".into()))?;
        for t in tensors {
            first.require_same_shape(t)?;
        }
        let mut dims = first.dims().to_vec();
        dims.push(tensors.len());
        let shape = Shape::new(dims)?;
        let data = tensors.iter().flat_map(|t| t.data.iter().copied()).collect();
        Ok(DenseTensor { shape, data })
    }

    /// Stacks along a new leading mode: slice `j` of the result (first index
    /// fixed to `j`) equals `tensors[j]`. Same primitive as [`Self::stack`]
    /// followed by moving the new mode to the front.
    pub fn stack_first(tensors: &[DenseTensor]) -> Result<DenseTensor> {
        let stacked = DenseTensor::stack(tensors)?;
        let order = stacked.order();
        // Trailing mode to the front: the mode-N unfolding transposed is the
        // mode-1 unfolding of the permuted tensor.
        let unfolded = stacked.unfold(order - 1)?;
        let mut dims = vec![tensors.len()];
        dims.extend_from_slice(tensors[0].dims());
        DenseTensor::fold(&unfolded, Shape::new(dims)?, 0)
    }

    /// Subtensor with mode `mode` fixed to `index` (order drops by one).
    pub fn slice(&self, mode: usize, index: usize) -> Result<DenseTensor> {
        self.shape.check_mode(mode)?;
        let (left, dim, right) = self.shape.split(mode);
        if index >= dim {
            return Err(Error::Bounds { mode, index, dim });
        }
        let mut dims = self.dims().to_vec();
        dims.remove(mode);
        let mut data = Vec::with_capacity(left * right);
        for r in 0..right {
            let base = left * (index + dim * r);
            data.extend_from_slice(&self.data[base..base + left]);
        }
        Ok(DenseTensor {
            shape: Shape { dims },
            data,
        })
    }

    /// `self x_mode a`: replaces `I_mode` by `a.rows()`.
    pub fn mode_n_product(&self, a: &Matrix, mode: usize) -> Result<DenseTensor> {
        self.shape.check_mode(mode)?;
        let (left, dim, right) = self.shape.split(mode);
        if a.cols != dim {
            return Err(Error::shape(format!(
                "matrix with {} columns cannot act on mode {mode} of size {dim}",
                a.cols
            )));
        }
        let out_dim = a.rows;
        let mut dims = self.dims().to_vec();
        dims[mode] = out_dim;
        let shape = Shape::new(dims)?;
        let mut data = vec![0.0; shape.len()];
        for r in 0..right {
            for i in 0..dim {
                let src = &self.data[left * (i + dim * r)..left * (i + dim * r) + left];
                for j in 0..out_dim {
                    let coef = a.get(j, i);
                    if coef == 0.0 {
                        continue;
                    }
                    let base = left * (j + out_dim * r);
                    for (d, &x) in data[base..base + left].iter_mut().zip(src) {
                        *d += coef * x;
                    }
                }
            }
        }
        Ok(DenseTensor { shape, data })
    }

    /// Single-mode contraction over `self`'s mode `n` and `other`'s mode
    /// `m`. Result modes: remaining modes of `self`, then of `other`.
    pub fn contract(&self, n: usize, other: &DenseTensor, m: usize) -> Result<DenseTensor> {
        self.shape.check_mode(n)?;
        other.shape.check_mode(m)?;
        let (lx, dim, rx) = self.shape.split(n);
        let (ly, dim_y, ry) = other.shape.split(m);
        if dim != dim_y {
            return Err(Error::shape(format!(
                "contracted modes differ in size: {dim} vs {dim_y}"
            )));
        }
        let mut dims: Vec<usize> = self.dims().to_vec();
        dims.remove(n);
        let mut tail = other.dims().to_vec();
        tail.remove(m);
        dims.extend(tail);
        let shape = Shape::new(dims)?;
        let sx = lx * rx;
        let mut data = vec![0.0; shape.len()];
        for b in 0..ry {
            for a in 0..ly {
                for r in 0..rx {
                    for l in 0..lx {
                        let mut acc = 0.0;
                        for i in 0..dim {
                            acc += self.data[l + lx * (i + dim * r)]
                                * other.data[a + ly * (i + dim * b)];
                        }
                        data[(l + lx * r) + sx * (a + ly * b)] = acc;
                    }
                }
            }
        }
        Ok(DenseTensor { shape, data })
    }

    /// Contraction of an ordered trailing block of modes of `self` against
    /// an equally sized trailing block of `other`. The result carries the
    /// leading modes of `self`, then the leading modes of `other`.
    pub fn contract_block(
        &self,
        modes: Range<usize>,
        other: &DenseTensor,
        other_modes: Range<usize>,
    ) -> Result<DenseTensor> {
        if modes.end != self.order() || other_modes.end != other.order() {
            return Err(Error::shape(
                "contracted blocks must be the trailing modes of both tensors",
            ));
        }
        if modes.start > modes.end || other_modes.start > other_modes.end {
            return Err(Error::shape("empty or reversed mode range"));
        }
        let block = &self.dims()[modes.clone()];
        let other_block = &other.dims()[other_modes.clone()];
        if block != other_block {
            return Err(Error::shape(format!(
                "contracted blocks differ: {block:?} vs {other_block:?}"
            )));
        }
        let a_len: usize = self.dims()[..modes.start].iter().product();
        let c_len: usize = other.dims()[..other_modes.start].iter().product();
        let b_len: usize = block.iter().product();
        let mut dims = self.dims()[..modes.start].to_vec();
        dims.extend_from_slice(&other.dims()[..other_modes.start]);
        let shape = Shape::new(dims)?;
        let mut data = vec![0.0; shape.len()];
        for c in 0..c_len {
            for b in 0..b_len {
                let y = other.data[c + c_len * b];
                if y == 0.0 {
                    continue;
                }
                let xs = &self.data[a_len * b..a_len * (b + 1)];
                for (d, &x) in data[a_len * c..a_len * (c + 1)].iter_mut().zip(xs) {
                    *d += x * y;
                }
            }
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn scalar_product(&self, other: &DenseTensor) -> Result<f64> {
        self.require_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Square root of `<t, t>`.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Converts an order-2 tensor into a matrix without copying.
    pub fn into_matrix(self) -> Result<Matrix> {
        if self.order() != 2 {
            return Err(Error::shape(format!(
                "tensor of order {} is not a matrix",
                self.order()
            )));
        }
        Ok(Matrix {
            rows: self.dims()[0],
            cols: self.dims()[1],
            data: self.data,
        })
    }
}

impl Index<&[usize]> for DenseTensor {
    type Output = f64;

    fn index(&self, index: &[usize]) -> &f64 {
        let at = self
            .shape
            .linear_index(index)
            .unwrap_or_else(|e| panic!("{e}"));
        &self.data[at]
    }
}
