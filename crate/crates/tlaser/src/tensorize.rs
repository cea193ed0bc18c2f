//! Structure-aware reshaping between 2-D transformer weight matrices and
//! third-order tensors.
//!
//! Three operators cover the standard transformer weight layouts:
//!
//! * attention projections (`d_m x d_m`): row blocks of `d_h = d_m / n_h`
//!   rows become frontal slices, one per head, giving `d_h x d_m x n_h`;
//! * FFN expansion (`(r d_m) x d_m`): `r` row blocks of `d_m` rows become
//!   frontal slices, giving `d_m x d_m x r`;
//! * FFN projection (`d_m x (r d_m)`): `r` column blocks become frontal
//!   slices, also giving `d_m x d_m x r`.
//!
//! Placing the structural index (head or block) on mode 3 lets the tube
//! transform capture correlations across those structures. Every operator is
//! a pure entry permutation: exactly invertible, no arithmetic, bitwise norm
//! preservation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// The structural layout of a compressible weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    /// Square `d_m x d_m` projection with `n_h` heads of `d_h = d_m / n_h`
    /// rows each. Layouts with unequal key/value head counts (grouped-query
    /// attention) are not square and are rejected by the shape checks.
    Attention { d_m: usize, n_h: usize },
    /// `(blocks * d_m) x d_m` expansion matrix.
    FfnIn { d_m: usize, blocks: usize },
    /// `d_m x (blocks * d_m)` projection matrix.
    FfnOut { d_m: usize, blocks: usize },
}

impl WeightKind {
    /// Expected matrix shape `(rows, cols)`.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match *self {
            WeightKind::Attention { d_m, .. } => (d_m, d_m),
            WeightKind::FfnIn { d_m, blocks } => (blocks * d_m, d_m),
            WeightKind::FfnOut { d_m, blocks } => (d_m, blocks * d_m),
        }
    }

    /// Tensor shape `(m, n, p)` produced by the forward operator.
    pub fn tensor_shape(&self) -> (usize, usize, usize) {
        match *self {
            WeightKind::Attention { d_m, n_h } => (d_m / n_h, d_m, n_h),
            WeightKind::FfnIn { d_m, blocks } | WeightKind::FfnOut { d_m, blocks } => {
                (d_m, d_m, blocks)
            }
        }
    }

    /// Mode-3 extent (heads or blocks).
    pub fn structural_count(&self) -> usize {
        match *self {
            WeightKind::Attention { n_h, .. } => n_h,
            WeightKind::FfnIn { blocks, .. } | WeightKind::FfnOut { blocks, .. } => blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightKind::Attention { d_m, n_h } => {
                if n_h == 0 || d_m == 0 {
                    return Err(Error::invalid("attention dimensions must be positive"));
                }
                if d_m % n_h != 0 {
                    return Err(Error::invalid(format!(
                        "model dimension {d_m} is not divisible by {n_h} heads"
                    )));
                }
            }
            WeightKind::FfnIn { d_m, blocks } | WeightKind::FfnOut { d_m, blocks } => {
                if d_m == 0 || blocks == 0 {
                    return Err(Error::invalid("ffn dimensions must be positive"));
                }
            }
        }
        Ok(())
    }

    fn check_matrix(&self, w: &DMatrix<f64>) -> Result<()> {
        self.validate()?;
        let (rows, cols) = self.matrix_shape();
        if (w.nrows(), w.ncols()) != (rows, cols) {
            return Err(Error::shape(format!(
                "{:?} expects a {}x{} matrix, got {}x{}",
                self,
                rows,
                cols,
                w.nrows(),
                w.ncols()
            )));
        }
        Ok(())
    }

    fn check_tensor(&self, t: &Tensor3) -> Result<()> {
        self.validate()?;
        if t.dims() != self.tensor_shape() {
            return Err(Error::shape(format!(
                "{:?} expects a tensor of shape {:?}, got {:?}",
                self,
                self.tensor_shape(),
                t.dims()
            )));
        }
        Ok(())
    }
}

/// Attention tensorization: `W_{(h-1) d_h + i, j}` becomes entry `(i, j, h)`,
/// so frontal slice `h` is exactly head `h`'s weight block.
pub fn phi_attn(w: &DMatrix<f64>, n_h: usize) -> Result<Tensor3> {
    if w.nrows() != w.ncols() {
        return Err(Error::shape(format!(
            "attention weights must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let kind = WeightKind::Attention { d_m: w.nrows(), n_h };
    kind.check_matrix(w)?;
    let d_h = w.nrows() / n_h;
    Ok(Tensor3::from_fn(d_h, w.ncols(), n_h, |i, j, h| {
        w[(h * d_h + i, j)]
    }))
}

/// Exact inverse of [`phi_attn`].
pub fn phi_attn_inv(t: &Tensor3) -> DMatrix<f64> {
    let (d_h, d_m, n_h) = t.dims();
    DMatrix::from_fn(d_h * n_h, d_m, |row, j| t.get(row % d_h, j, row / d_h))
}

/// FFN expansion tensorization: row block `b` (rows `(b-1) d_m .. b d_m`)
/// becomes frontal slice `b`.
pub fn phi_ffn_in(u: &DMatrix<f64>, blocks: usize) -> Result<Tensor3> {
    if blocks == 0 || !u.nrows().is_multiple_of(blocks) {
        return Err(Error::shape(format!(
            "row count {} is not divisible into {} blocks",
            u.nrows(),
            blocks
        )));
    }
    let kind = WeightKind::FfnIn {
        d_m: u.nrows() / blocks,
        blocks,
    };
    kind.check_matrix(u)?;
    let d_m = u.ncols();
    Ok(Tensor3::from_fn(d_m, d_m, blocks, |i, j, b| {
        u[(b * d_m + i, j)]
    }))
}

/// Exact inverse of [`phi_ffn_in`].
pub fn phi_ffn_in_inv(t: &Tensor3) -> DMatrix<f64> {
    let (d_m, _, blocks) = t.dims();
    DMatrix::from_fn(blocks * d_m, d_m, |row, j| t.get(row % d_m, j, row / d_m))
}

/// FFN projection tensorization: column block `b` becomes frontal slice `b`.
pub fn phi_ffn_out(u: &DMatrix<f64>, blocks: usize) -> Result<Tensor3> {
    if blocks == 0 || !u.ncols().is_multiple_of(blocks) {
        return Err(Error::shape(format!(
            "column count {} is not divisible into {} blocks",
            u.ncols(),
            blocks
        )));
    }
    let kind = WeightKind::FfnOut {
        d_m: u.ncols() / blocks,
        blocks,
    };
    kind.check_matrix(u)?;
    let d_m = u.nrows();
    Ok(Tensor3::from_fn(d_m, d_m, blocks, |i, j, b| {
        u[(i, b * d_m + j)]
    }))
}

/// Exact inverse of [`phi_ffn_out`].
pub fn phi_ffn_out_inv(t: &Tensor3) -> DMatrix<f64> {
    let (d_m, _, blocks) = t.dims();
    DMatrix::from_fn(d_m, blocks * d_m, |i, col| t.get(i, col % d_m, col / d_m))
}

/// Forward tensorization dispatching on the weight kind.
pub fn tensorize(w: &DMatrix<f64>, kind: &WeightKind) -> Result<Tensor3> {
    kind.check_matrix(w)?;
    match *kind {
        WeightKind::Attention { n_h, .. } => phi_attn(w, n_h),
        WeightKind::FfnIn { blocks, .. } => phi_ffn_in(w, blocks),
        WeightKind::FfnOut { blocks, .. } => phi_ffn_out(w, blocks),
    }
}

/// Inverse tensorization dispatching on the weight kind; fails when the
/// tensor shape is inconsistent with the kind.
pub fn phi_inverse(t: &Tensor3, kind: &WeightKind) -> Result<DMatrix<f64>> {
    kind.check_tensor(t)?;
    Ok(match *kind {
        WeightKind::Attention { .. } => phi_attn_inv(t),
        WeightKind::FfnIn { .. } => phi_ffn_in_inv(t),
        WeightKind::FfnOut { .. } => phi_ffn_out_inv(t),
    })
}
