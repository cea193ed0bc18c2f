//! Dense third-order tensors, slice/fiber views, unfoldings, and n-mode products.
//!
//! A [`Tensor3`] of shape `m x n x p` stores its entries frontal-slice-major and
//! row-major within each slice: entry `(i, j, k)` lives at linear offset
//! `(k * m + i) * n + j` (all indices zero-based). Frontal slice `k` is the
//! `m x n` matrix `A(:, :, k)`, lateral slice `j` is the `m x p` matrix
//! `A(:, j, :)`, and tube `(i, j)` is the length-`p` fiber `A(i, j, :)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One of the three modes of a third-order tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    /// Extent of this mode for a tensor with the given dimensions.
    pub fn extent(self, dims: (usize, usize, usize)) -> usize {
        match self {
            Mode::One => dims.0,
            Mode::Two => dims.1,
            Mode::Three => dims.2,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self {
            Mode::One => 1,
            Mode::Two => 2,
            Mode::Three => 3,
        };
        write!(f, "{k}")
    }
}

/// Sum of squares accumulated in ascending value order.
///
/// The accumulation order is a function of the values alone, not of the storage
/// layout, so permuted views of the same entries (e.g. a tensorized weight
/// matrix) produce bit-identical norms.
pub(crate) fn sum_of_squares_sorted(values: &[f64]) -> f64 {
    let mut squares: Vec<f64> = values.iter().map(|v| v * v).collect();
    squares.sort_unstable_by(f64::total_cmp);
    squares.iter().sum()
}

/// Frobenius norm of a matrix, accumulated in the same value-sorted order as
/// [`Tensor3::frobenius_norm`] so that entry permutations preserve the result
/// bit-for-bit.
pub fn matrix_frobenius_norm(m: &DMatrix<f64>) -> f64 {
    sum_of_squares_sorted(m.as_slice()).sqrt()
}

/// Dense real third-order tensor with fixed canonical element order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    m: usize,
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    /// All-zero tensor of shape `m x n x p`. Panics if any extent is zero.
    pub fn zeros(m: usize, n: usize, p: usize) -> Self {
        assert!(m > 0 && n > 0 && p > 0, "tensor extents must be positive");
        Tensor3 {
            m,
            n,
            p,
            data: vec![0.0; m * n * p],
        }
    }

    /// Build a tensor by evaluating `f(i, j, k)` at every index.
    pub fn from_fn(m: usize, n: usize, p: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(m, n, p);
        for k in 0..p {
            for i in 0..m {
                for j in 0..n {
                    t.data[(k * m + i) * n + j] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Wrap a data vector already in canonical order.
    ///
    /// Rejects length mismatches and non-finite entries.
    pub fn from_vec(m: usize, n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || p == 0 {
            return Err(Error::invalid("tensor extents must be positive"));
        }
        if data.len() != m * n * p {
            return Err(Error::shape(format!(
                "data length {} does not match {}x{}x{} = {}",
                data.len(),
                m,
                n,
                p,
                m * n * p
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at linear offset {idx}"
            )));
        }
        Ok(Tensor3 { m, n, p, data })
    }

    pub(crate) fn from_vec_unchecked(m: usize, n: usize, p: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), m * n * p);
        Tensor3 { m, n, p, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.p)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Entry `(i, j, k)`, zero-based.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert!(i < self.m && j < self.n && k < self.p);
        self.data[(k * self.m + i) * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        debug_assert!(i < self.m && j < self.n && k < self.p);
        self.data[(k * self.m + i) * self.n + j] = value;
    }

    /// Entries in canonical order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frontal slice `k` as an `m x n` matrix.
    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        assert!(k < self.p, "frontal slice index out of range");
        let start = k * self.m * self.n;
        DMatrix::from_row_slice(self.m, self.n, &self.data[start..start + self.m * self.n])
    }

    /// Overwrite frontal slice `k`.
    pub fn set_frontal_slice(&mut self, k: usize, slice: &DMatrix<f64>) {
        assert!(k < self.p, "frontal slice index out of range");
        assert_eq!(
            (slice.nrows(), slice.ncols()),
            (self.m, self.n),
            "frontal slice shape mismatch"
        );
        for i in 0..self.m {
            for j in 0..self.n {
                self.data[(k * self.m + i) * self.n + j] = slice[(i, j)];
            }
        }
    }

    /// Lateral slice `j` as an `m x p` view type.
    pub fn lateral_slice(&self, j: usize) -> LateralSlice {
        assert!(j < self.n, "lateral slice index out of range");
        let mut data = vec![0.0; self.m * self.p];
        for k in 0..self.p {
            for i in 0..self.m {
                data[k * self.m + i] = self.get(i, j, k);
            }
        }
        LateralSlice {
            m: self.m,
            p: self.p,
            data,
        }
    }

    /// Tube `(i, j)`: the length-`p` mode-3 fiber.
    pub fn tube(&self, i: usize, j: usize) -> Tube {
        assert!(i < self.m && j < self.n, "tube index out of range");
        Tube {
            values: (0..self.p).map(|k| self.get(i, j, k)).collect(),
        }
    }

    /// Frobenius norm; zero exactly when the tensor is zero.
    pub fn frobenius_norm(&self) -> f64 {
        sum_of_squares_sorted(&self.data).sqrt()
    }

    pub fn scale(&self, c: f64) -> Tensor3 {
        Tensor3 {
            m: self.m,
            n: self.n,
            p: self.p,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Mode-`mode` unfolding.
    ///
    /// Rows are indexed by the chosen mode; columns enumerate the remaining two
    /// indices with the lower-numbered mode varying fastest:
    /// mode 1 -> `m x (n p)` with column `k*n + j`;
    /// mode 2 -> `n x (m p)` with column `k*m + i`;
    /// mode 3 -> `p x (m n)` with column `j*m + i`.
    pub fn unfold(&self, mode: Mode) -> DMatrix<f64> {
        let (m, n, p) = self.dims();
        match mode {
            Mode::One => DMatrix::from_fn(m, n * p, |i, c| self.get(i, c % n, c / n)),
            Mode::Two => DMatrix::from_fn(n, m * p, |j, c| self.get(c % m, j, c / m)),
            Mode::Three => DMatrix::from_fn(p, m * n, |k, c| self.get(c % m, c / m, k)),
        }
    }

    /// Exact inverse of [`Tensor3::unfold`] for the stated column order.
    pub fn fold(mat: &DMatrix<f64>, mode: Mode, dims: (usize, usize, usize)) -> Result<Tensor3> {
        let (m, n, p) = dims;
        let expected = match mode {
            Mode::One => (m, n * p),
            Mode::Two => (n, m * p),
            Mode::Three => (p, m * n),
        };
        if (mat.nrows(), mat.ncols()) != expected {
            return Err(Error::shape(format!(
                "cannot fold {}x{} matrix into {}x{}x{} along mode {}",
                mat.nrows(),
                mat.ncols(),
                m,
                n,
                p,
                mode
            )));
        }
        let t = match mode {
            Mode::One => Tensor3::from_fn(m, n, p, |i, j, k| mat[(i, k * n + j)]),
            Mode::Two => Tensor3::from_fn(m, n, p, |i, j, k| mat[(j, k * m + i)]),
            Mode::Three => Tensor3::from_fn(m, n, p, |i, j, k| mat[(k, j * m + i)]),
        };
        Ok(t)
    }

    /// n-mode product with a matrix: `B = A x_mode X`, satisfying
    /// `B_(mode) = X * A_(mode)`.
    pub fn mode_n_product(&self, x: &DMatrix<f64>, mode: Mode) -> Result<Tensor3> {
        let extent = mode.extent(self.dims());
        if x.ncols() != extent {
            return Err(Error::shape(format!(
                "mode-{} product needs {} columns, matrix has {}",
                mode,
                extent,
                x.ncols()
            )));
        }
        let unfolded = self.unfold(mode);
        let product = x * unfolded;
        let (m, n, p) = self.dims();
        let new_dims = match mode {
            Mode::One => (x.nrows(), n, p),
            Mode::Two => (m, x.nrows(), p),
            Mode::Three => (m, n, x.nrows()),
        };
        Tensor3::fold(&product, mode, new_dims)
    }

    /// Contraction with a vector along `mode`; the singleton mode is dropped.
    ///
    /// Equals `mode_n_product` with the `1 x extent` row matrix `v`, squeezed:
    /// mode 1 -> `n x p`, mode 2 -> `m x p`, mode 3 -> `m x n`.
    pub fn contract_vector(&self, v: &[f64], mode: Mode) -> Result<DMatrix<f64>> {
        let extent = mode.extent(self.dims());
        if v.len() != extent {
            return Err(Error::shape(format!(
                "mode-{} contraction needs a length-{} vector, got {}",
                mode,
                extent,
                v.len()
            )));
        }
        let row = DMatrix::from_row_slice(1, v.len(), v);
        let t = self.mode_n_product(&row, mode)?;
        let (m, n, p) = self.dims();
        let out = match mode {
            Mode::One => DMatrix::from_fn(n, p, |j, k| t.get(0, j, k)),
            Mode::Two => DMatrix::from_fn(m, p, |i, k| t.get(i, 0, k)),
            Mode::Three => DMatrix::from_fn(m, n, |i, j| t.get(i, j, 0)),
        };
        Ok(out)
    }

    /// Keep mode-2 indices `0..cols` (a leading block of lateral slices).
    pub fn leading_columns(&self, cols: usize) -> Tensor3 {
        assert!(cols >= 1 && cols <= self.n, "column range out of bounds");
        Tensor3::from_fn(self.m, cols, self.p, |i, j, k| self.get(i, j, k))
    }

    /// Keep the leading `rows x cols` block of every frontal slice.
    pub fn leading_block(&self, rows: usize, cols: usize) -> Tensor3 {
        assert!(rows >= 1 && rows <= self.m && cols >= 1 && cols <= self.n);
        Tensor3::from_fn(rows, cols, self.p, |i, j, k| self.get(i, j, k))
    }
}

impl std::ops::Add for &Tensor3 {
    type Output = Tensor3;

    fn add(self, rhs: &Tensor3) -> Tensor3 {
        assert_eq!(self.dims(), rhs.dims(), "tensor addition shape mismatch");
        Tensor3 {
            m: self.m,
            n: self.n,
            p: self.p,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl std::ops::Sub for &Tensor3 {
    type Output = Tensor3;

    fn sub(self, rhs: &Tensor3) -> Tensor3 {
        assert_eq!(self.dims(), rhs.dims(), "tensor subtraction shape mismatch");
        Tensor3 {
            m: self.m,
            n: self.n,
            p: self.p,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Length-`p` mode-3 fiber, the "scalar" of the transform-domain algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    values: Vec<f64>,
}

impl Tube {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "tube length must be positive");
        Tube { values }
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Euclidean norm of the fiber.
    pub fn norm(&self) -> f64 {
        sum_of_squares_sorted(&self.values).sqrt()
    }

    /// View as a `1 x 1 x p` tensor.
    pub fn to_tensor3(&self) -> Tensor3 {
        Tensor3::from_vec_unchecked(1, 1, self.p(), self.values.clone())
    }

    pub fn from_tensor3(t: &Tensor3) -> Result<Tube> {
        if t.m() != 1 || t.n() != 1 {
            return Err(Error::shape(format!(
                "expected a 1x1xp tensor, got {}x{}x{}",
                t.m(),
                t.n(),
                t.p()
            )));
        }
        Ok(Tube {
            values: t.data().to_vec(),
        })
    }
}

/// `m x p` lateral slice, i.e. a tensor of shape `m x 1 x p`, the "vector"
/// of the transform-domain algebra. Entry `(i, k)` is stored at `k*m + i`,
/// matching the canonical order of the equivalent `m x 1 x p` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LateralSlice {
    m: usize,
    p: usize,
    data: Vec<f64>,
}

impl LateralSlice {
    pub fn zeros(m: usize, p: usize) -> Self {
        assert!(m > 0 && p > 0, "lateral slice extents must be positive");
        LateralSlice {
            m,
            p,
            data: vec![0.0; m * p],
        }
    }

    pub fn from_fn(m: usize, p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = LateralSlice::zeros(m, p);
        for k in 0..p {
            for i in 0..m {
                s.data[k * m + i] = f(i, k);
            }
        }
        s
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        debug_assert!(i < self.m && k < self.p);
        self.data[k * self.m + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        debug_assert!(i < self.m && k < self.p);
        self.data[k * self.m + i] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        sum_of_squares_sorted(&self.data).sqrt()
    }

    /// View as an `m x 1 x p` tensor (same canonical data order, no copy cost
    /// beyond the clone).
    pub fn to_tensor3(&self) -> Tensor3 {
        Tensor3::from_vec_unchecked(self.m, 1, self.p, self.data.clone())
    }

    pub fn from_tensor3(t: &Tensor3) -> Result<LateralSlice> {
        if t.n() != 1 {
            return Err(Error::shape(format!(
                "expected an mx1xp tensor, got {}x{}x{}",
                t.m(),
                t.n(),
                t.p()
            )));
        }
        Ok(LateralSlice {
            m: t.m(),
            p: t.p(),
            data: t.data().to_vec(),
        })
    }
}
