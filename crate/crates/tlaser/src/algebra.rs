//! The c-product ring structure: facewise product, c-product, c-transpose,
//! identity tensor, and the f-orthogonality / f-diagonality predicates.
//!
//! In the transform domain the product of two tensors reduces to independent
//! matrix products on matching frontal slices. All notions of orthogonality
//! and diagonality are slice-wise properties of the transformed tensor.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;
use crate::transform::{l_inverse, l_transform, TransformSpec};

/// Slice-by-slice matrix product of two transform-domain tensors.
///
/// `a_hat` is `m x l x p`, `b_hat` is `l x n x p`; slice `i` of the result is
/// `A_i * B_i`.
pub fn facewise_product(a_hat: &Tensor3, b_hat: &Tensor3) -> Result<Tensor3> {
    if a_hat.n() != b_hat.m() || a_hat.p() != b_hat.p() {
        return Err(Error::shape(format!(
            "facewise product needs (m x l x p) * (l x n x p), got {:?} * {:?}",
            a_hat.dims(),
            b_hat.dims()
        )));
    }
    let (m, _, p) = a_hat.dims();
    let n = b_hat.n();
    let mut out = Tensor3::zeros(m, n, p);
    for k in 0..p {
        let prod = a_hat.frontal_slice(k) * b_hat.frontal_slice(k);
        out.set_frontal_slice(k, &prod);
    }
    Ok(out)
}

/// The c-product `A *_c B = L^-1(L(A) facewise L(B))`.
pub fn c_product(a: &Tensor3, b: &Tensor3, t: &TransformSpec) -> Result<Tensor3> {
    let a_hat = l_transform(a, t)?;
    let b_hat = l_transform(b, t)?;
    l_inverse(&facewise_product(&a_hat, &b_hat)?, t)
}

/// Tensor transpose under any mode-3 transform: slice `i` of the transformed
/// result is the matrix transpose of slice `i` of the transformed input.
///
/// Because transposing modes 1-2 commutes with linear combinations along
/// mode 3, this equals the plain per-slice transpose in the spatial domain,
/// independent of the transform.
pub fn c_transpose(a: &Tensor3) -> Tensor3 {
    Tensor3::from_fn(a.n(), a.m(), a.p(), |i, j, k| a.get(j, i, k))
}

/// The identity element of the c-product on `m x m x p` tensors.
///
/// Every transform-domain frontal slice is the `m x m` identity matrix; the
/// diagonal tubes of the realized tensor equal the identity tube
/// `e = L^-1(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTensor {
    m: usize,
    p: usize,
    realized: Tensor3,
}

impl IdentityTensor {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn realized(&self) -> &Tensor3 {
        &self.realized
    }

    pub fn into_tensor(self) -> Tensor3 {
        self.realized
    }
}

/// Construct the c-identity of size `m x m x p` for the given transform.
pub fn c_identity(m: usize, p: usize, t: &TransformSpec) -> Result<IdentityTensor> {
    if t.p() != p {
        return Err(Error::shape(format!(
            "transform size {} does not match requested p = {}",
            t.p(),
            p
        )));
    }
    let hat = Tensor3::from_fn(m, m, p, |i, j, _| if i == j { 1.0 } else { 0.0 });
    let realized = l_inverse(&hat, t)?;
    Ok(IdentityTensor { m, p, realized })
}

/// The identity tube `e = L^-1(1)`, i.e. any diagonal tube of the c-identity.
pub fn identity_tube(p: usize, t: &TransformSpec) -> Result<crate::tensor::Tube> {
    let ones = Tensor3::from_fn(1, 1, p, |_, _, _| 1.0);
    let e = l_inverse(&ones, t)?;
    crate::tensor::Tube::from_tensor3(&e)
}

/// Whether `q` has f-orthonormal columns under the transform:
/// `|| q^T *_c q - I ||_F <= tol * sqrt(cols * p)`.
///
/// Square tensors with this property are f-orthogonal in the full sense
/// (`q^T *_c q = q *_c q^T = I`); rectangular `m x cols x p` tensors with
/// `m >= cols` are tested for orthonormal columns, which is what the factors
/// of a reduced c-SVD satisfy.
pub fn is_f_orthogonal(q: &Tensor3, t: &TransformSpec, tol: f64) -> Result<bool> {
    let cols = q.n();
    let gram = c_product(&c_transpose(q), q, t)?;
    let id = c_identity(cols, q.p(), t)?;
    let dev = (&gram - id.realized()).frobenius_norm();
    Ok(dev <= tol * ((cols * q.p()) as f64).sqrt())
}

/// Maximum deviation from per-slice orthonormal columns in the transform
/// domain; useful for reporting how far a basis has drifted.
pub fn gram_deviation(q: &Tensor3, t: &TransformSpec) -> Result<f64> {
    let q_hat = l_transform(q, t)?;
    let mut worst = 0.0f64;
    for k in 0..q.p() {
        let s = q_hat.frontal_slice(k);
        let g = s.transpose() * &s;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
    }
    Ok(worst)
}

/// Whether every frontal slice of `s` is diagonal to tolerance
/// `tol * ||s||_F` on off-diagonal magnitudes.
///
/// The check applies to the tensor as given: pass the spatial tensor for a
/// spatial check, or its transform for the transform-domain check (the
/// authoritative one for c-SVD middle factors).
pub fn is_f_diagonal(s: &Tensor3, tol: f64) -> bool {
    let bound = tol * s.frobenius_norm();
    for k in 0..s.p() {
        for i in 0..s.m() {
            for j in 0..s.n() {
                if i != j && s.get(i, j, k).abs() > bound {
                    return false;
                }
            }
        }
    }
    true
}

/// Scale a tensor by a tube acting as a transform-domain scalar: slice `i`
/// of the transformed result is the transformed slice times the tube's `i`-th
/// transform coefficient. Equivalent to `x *_c tube` with the tube viewed as
/// a `1 x 1 x p` tensor, but valid for any operand shape.
pub fn scale_by_tube(x: &Tensor3, tube: &crate::tensor::Tube, t: &TransformSpec) -> Result<Tensor3> {
    if tube.p() != x.p() {
        return Err(Error::shape(format!(
            "tube length {} does not match tensor mode-3 extent {}",
            tube.p(),
            x.p()
        )));
    }
    let x_hat = l_transform(x, t)?;
    let tube_hat = l_transform(&tube.to_tensor3(), t)?;
    let mut out = Tensor3::zeros(x.m(), x.n(), x.p());
    for k in 0..x.p() {
        let scaled: DMatrix<f64> = x_hat.frontal_slice(k) * tube_hat.get(0, 0, k);
        out.set_frontal_slice(k, &scaled);
    }
    l_inverse(&out, t)
}
