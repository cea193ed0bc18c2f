//! Invertible mode-3 transforms: the orthonormal DCT-II and arbitrary
//! explicit matrices.
//!
//! Every product in this crate is defined relative to an invertible `p x p`
//! matrix `Z` applied along tubes: `L(A) = A x_3 Z`. The default is the
//! orthonormal DCT-II, which is orthogonal (`Z^-1 = Z^T`), keeps all
//! arithmetic real, and compacts energy across correlated frontal slices.
//! An explicit matrix can be supplied when a different transform is wanted;
//! it is checked for invertibility up front.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{Mode, Tensor3};

/// Which mode-3 transform a [`TransformSpec`] applies.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    /// Orthonormal (unitary-scaled) DCT-II.
    DctOrthonormal,
    /// Caller-supplied invertible matrix.
    ExplicitMatrix,
}

/// An invertible mode-3 transform together with its precomputed inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    p: usize,
    kind: TransformKind,
    z: DMatrix<f64>,
    z_inv: DMatrix<f64>,
}

/// Orthonormal DCT-II matrix of size `p`.
///
/// Row `k`, column `j` is `s_k * cos(pi * (2j + 1) * k / (2p))` with
/// `s_0 = sqrt(1/p)` and `s_k = sqrt(2/p)` otherwise, so the matrix is
/// orthogonal.
pub fn dct_matrix(p: usize) -> DMatrix<f64> {
    assert!(p > 0, "transform size must be positive");
    let pf = p as f64;
    DMatrix::from_fn(p, p, |k, j| {
        let scale = if k == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
        scale * (std::f64::consts::PI * (2.0 * j as f64 + 1.0) * k as f64 / (2.0 * pf)).cos()
    })
}

impl TransformSpec {
    /// Orthonormal DCT-II of size `p`.
    pub fn dct(p: usize) -> Self {
        let z = dct_matrix(p);
        let z_inv = z.transpose();
        TransformSpec {
            p,
            kind: TransformKind::DctOrthonormal,
            z,
            z_inv,
        }
    }

    /// Arbitrary invertible transform. Fails if `z` is not square, contains
    /// non-finite entries, or is numerically singular.
    pub fn explicit(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() != z.ncols() || z.nrows() == 0 {
            return Err(Error::invalid(format!(
                "transform matrix must be square and nonempty, got {}x{}",
                z.nrows(),
                z.ncols()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("transform matrix has non-finite entries"));
        }
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::invalid("transform matrix is singular"))?;
        if z_inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "transform matrix is too ill-conditioned to invert",
            ));
        }
        Ok(TransformSpec {
            p: z.nrows(),
            kind: TransformKind::ExplicitMatrix,
            z,
            z_inv,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> &TransformKind {
        &self.kind
    }

    /// The forward transform matrix `Z`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// The inverse transform matrix `Z^-1`.
    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.z_inv
    }

    /// Whether `Z^-1 = Z^T` holds by construction.
    pub fn is_orthogonal(&self) -> bool {
        matches!(self.kind, TransformKind::DctOrthonormal)
    }

    fn check_p(&self, a: &Tensor3) -> Result<()> {
        if a.p() != self.p {
            return Err(Error::shape(format!(
                "transform size {} does not match tensor mode-3 extent {}",
                self.p,
                a.p()
            )));
        }
        Ok(())
    }
}

/// Forward transform `L(A) = A x_3 Z`.
pub fn l_transform(a: &Tensor3, t: &TransformSpec) -> Result<Tensor3> {
    t.check_p(a)?;
    a.mode_n_product(t.matrix(), Mode::Three)
}

/// Inverse transform `L^-1(A) = A x_3 Z^-1`.
pub fn l_inverse(a: &Tensor3, t: &TransformSpec) -> Result<Tensor3> {
    t.check_p(a)?;
    a.mode_n_product(t.inverse_matrix(), Mode::Three)
}

/// Orthonormal DCT-II along every tube.
pub fn dct_mode3(a: &Tensor3) -> Tensor3 {
    l_transform(a, &TransformSpec::dct(a.p())).expect("sizes match by construction")
}

/// Exact inverse of [`dct_mode3`].
pub fn idct_mode3(a: &Tensor3) -> Tensor3 {
    l_inverse(a, &TransformSpec::dct(a.p())).expect("sizes match by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_tensor(m: usize, n: usize, p: usize, seed: u64) -> Tensor3 {
        let mut rng = StdRng::seed_from_u64(seed);
        Tensor3::from_fn(m, n, p, |_, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn size_one_dct_is_identity() {
        let a = random_tensor(3, 2, 1, 1);
        let hat = dct_mode3(&a);
        assert!((&hat - &a).frobenius_norm() <= 1e-15 * a.frobenius_norm());
    }

    #[test]
    fn constant_tube_maps_to_dc_coefficient() {
        let p = 5;
        let c = 0.37;
        let a = Tensor3::from_fn(2, 2, p, |_, _, _| c);
        let hat = dct_mode3(&a);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(hat.get(i, j, 0), c * (p as f64).sqrt(), max_relative = 1e-14);
                for k in 1..p {
                    assert!(hat.get(i, j, k).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn explicit_identity_transform_is_identity() {
        let a = random_tensor(2, 3, 4, 5);
        let t = TransformSpec::explicit(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(l_transform(&a, &t).unwrap(), a);
    }

    #[test]
    fn explicit_singular_matrix_is_rejected() {
        let z = DMatrix::from_element(3, 3, 1.0);
        assert!(TransformSpec::explicit(z).is_err());
        let z = DMatrix::from_row_slice(2, 3, &[1.0; 6]);
        assert!(TransformSpec::explicit(z).is_err());
    }

    #[test]
    fn roundtrip_on_random_tensor() {
        let a = random_tensor(4, 4, 8, 7);
        let t = TransformSpec::dct(8);
        let back = l_inverse(&l_transform(&a, &t).unwrap(), &t).unwrap();
        assert!((&back - &a).frobenius_norm() <= 1e-13 * a.frobenius_norm());
    }

    #[test]
    fn roundtrip_zero_and_p1() {
        let z = Tensor3::zeros(2, 2, 3);
        assert_eq!(idct_mode3(&dct_mode3(&z)), z);
        let a = random_tensor(3, 3, 1, 9);
        let back = idct_mode3(&dct_mode3(&a));
        assert!((&back - &a).frobenius_norm() <= 1e-15 * a.frobenius_norm());
    }

    #[test]
    fn dct_preserves_frobenius_norm() {
        let a = random_tensor(5, 4, 6, 11);
        let hat = dct_mode3(&a);
        assert_relative_eq!(hat.frobenius_norm(), a.frobenius_norm(), max_relative = 1e-13);
    }

    #[test]
    fn impulse_tube_matches_cosine_formula() {
        // A single tube (1, 0, ..., 0) transforms to the first column of the
        // DCT-II matrix; compare against a direct cosine evaluation.
        let p = 7;
        let a = Tensor3::from_fn(1, 1, p, |_, _, k| if k == 0 { 1.0 } else { 0.0 });
        let hat = dct_mode3(&a);
        let pf = p as f64;
        for k in 0..p {
            let scale = if k == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
            let expect = scale * (std::f64::consts::PI * k as f64 / (2.0 * pf)).cos();
            assert_relative_eq!(hat.get(0, 0, k), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn transform_is_linear() {
        let a = random_tensor(3, 2, 5, 13);
        let b = random_tensor(3, 2, 5, 17);
        let t = TransformSpec::dct(5);
        let lhs = l_transform(&(&a.scale(2.5) + &b.scale(-0.75)), &t).unwrap();
        let rhs = &l_transform(&a, &t).unwrap().scale(2.5)
            + &l_transform(&b, &t).unwrap().scale(-0.75);
        assert!((&lhs - &rhs).frobenius_norm() <= 1e-13 * rhs.frobenius_norm());
    }

    #[test]
    fn matches_naive_per_tube_application() {
        // Guards any future fast path: apply Z tube by tube with explicit loops.
        for p in [3, 4, 8] {
            let a = random_tensor(3, 4, p, 19 + p as u64);
            let z = dct_matrix(p);
            let hat = dct_mode3(&a);
            for i in 0..3 {
                for j in 0..4 {
                    for k in 0..p {
                        let direct: f64 = (0..p).map(|l| z[(k, l)] * a.get(i, j, l)).sum();
                        assert_relative_eq!(hat.get(i, j, k), direct, epsilon = 1e-13);
                    }
                }
            }
        }
    }
}
