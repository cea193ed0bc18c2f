//! Full and truncated c-SVD: per-slice singular value decompositions in the
//! transform domain, singular tubes and their ordering, tubal and average rank.
//!
//! For `A` of shape `m x n x p` the factorization is `A = U *_c S *_c V^T`
//! with `U` (`m x q x p`) and `V` (`n x q x p`) carrying f-orthonormal columns
//! and `S` (`q x q x p`, `q = min(m, n)`) f-diagonal in the transform domain.
//! The Euclidean norms of the diagonal tubes of `S` order the spectrum.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::algebra::c_product;
use crate::algebra::c_transpose;
use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tube};
use crate::transform::{l_inverse, l_transform, TransformSpec};

/// Economy-size SVD of one matrix with singular values sorted in descending
/// order (ties keep the lower original index first).
///
/// Returns `(u, sigma, v)` with `u: m x q`, `sigma: q`, `v: n x q`.
pub(crate) fn sorted_svd(mat: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    // A zeroing threshold at exact machine epsilon leaves stray rotations
    // unapplied on rank-deficient inputs (factors stop reconstructing);
    // 1e-14 is reliable and well below every tolerance used downstream.
    let svd = mat
        .clone()
        .try_svd(true, true, 1e-14, 1_000_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma = svd.singular_values;
    let q = sigma.len();

    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap().then(a.cmp(&b)));

    let u_sorted = DMatrix::from_fn(u.nrows(), q, |i, j| u[(i, order[j])]);
    let v_sorted = DMatrix::from_fn(v_t.ncols(), q, |i, j| v_t[(order[j], i)]);
    let s_sorted: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    Ok((u_sorted, s_sorted, v_sorted))
}

/// The factors of a c-SVD, together with the transform they were computed
/// under and the ordered singular tube norms.
#[derive(Debug, Clone)]
pub struct CSvdFactors {
    u: Tensor3,
    s: Tensor3,
    v: Tensor3,
    tube_norms: Vec<f64>,
    transform: TransformSpec,
}

impl CSvdFactors {
    /// Left factor, `m x q x p`.
    pub fn u(&self) -> &Tensor3 {
        &self.u
    }

    /// f-diagonal middle factor, `q x q x p`.
    pub fn s(&self) -> &Tensor3 {
        &self.s
    }

    /// Right factor, `n x q x p` (not transposed).
    pub fn v(&self) -> &Tensor3 {
        &self.v
    }

    /// Euclidean norms of the singular tubes, non-increasing.
    ///
    /// Computed in the transform domain, where per-slice ordering makes the
    /// sequence monotone; for orthogonal transforms this equals the spatial
    /// tube norm.
    pub fn tube_norms(&self) -> &[f64] {
        &self.tube_norms
    }

    /// Number of singular tubes, `q = min(m, n)`.
    pub fn q(&self) -> usize {
        self.tube_norms.len()
    }

    pub fn transform(&self) -> &TransformSpec {
        &self.transform
    }

    /// The `i`-th singular tube `S(i, i, :)`.
    pub fn singular_tube(&self, i: usize) -> Tube {
        self.s.tube(i, i)
    }

    /// `U *_c S *_c V^T`, the (full-rank) reconstruction.
    pub fn reconstruct(&self) -> Result<Tensor3> {
        self.truncate(self.q())
    }

    /// Rank-`r` truncation `U_r *_c S_r *_c V_r^T`.
    ///
    /// Keeps the first `r` lateral slices of `U` and `V` and the leading
    /// `r x r` block of `S`. The squared Frobenius error equals the sum of the
    /// discarded squared transform-domain singular values.
    pub fn truncate(&self, r: usize) -> Result<Tensor3> {
        if r < 1 || r > self.q() {
            return Err(Error::invalid(format!(
                "truncation rank {} outside 1..={}",
                r,
                self.q()
            )));
        }
        let u_r = self.u.leading_columns(r);
        let s_r = self.s.leading_block(r, r);
        let v_r = self.v.leading_columns(r);
        let us = c_product(&u_r, &s_r, &self.transform)?;
        c_product(&us, &c_transpose(&v_r), &self.transform)
    }
}

/// Compute the c-SVD of `a` under transform `t`.
///
/// Transforms once along mode 3, decomposes every frontal slice
/// independently (slices are processed in parallel; the result is identical
/// to sequential execution), assembles the factors, and transforms back.
pub fn csvd(a: &Tensor3, t: &TransformSpec) -> Result<CSvdFactors> {
    let (m, n, p) = a.dims();
    let q = m.min(n);
    let a_hat = l_transform(a, t)?;

    let per_slice: Vec<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> = (0..p)
        .into_par_iter()
        .map(|k| {
            sorted_svd(&a_hat.frontal_slice(k)).map_err(|_| {
                Error::Numerical(format!("SVD failed on transform-domain slice {k}"))
            })
        })
        .collect::<Result<_>>()?;

    let mut u_hat = Tensor3::zeros(m, q, p);
    let mut s_hat = Tensor3::zeros(q, q, p);
    let mut v_hat = Tensor3::zeros(n, q, p);
    for (k, (uk, sk, vk)) in per_slice.iter().enumerate() {
        u_hat.set_frontal_slice(k, uk);
        v_hat.set_frontal_slice(k, vk);
        for (j, &sigma) in sk.iter().enumerate() {
            s_hat.set(j, j, k, sigma);
        }
    }

    let tube_norms: Vec<f64> = (0..q)
        .map(|j| {
            (0..p)
                .map(|k| s_hat.get(j, j, k).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    Ok(CSvdFactors {
        u: l_inverse(&u_hat, t)?,
        s: l_inverse(&s_hat, t)?,
        v: l_inverse(&v_hat, t)?,
        tube_norms,
        transform: t.clone(),
    })
}

/// Number of nonzero singular tubes: indices `i` with
/// `max_j |S_hat(i, i, j)| > tol * tube_norms[0]`. The zero tensor has rank 0.
pub fn tubal_rank(a: &Tensor3, t: &TransformSpec, tol: f64) -> Result<usize> {
    let f = csvd(a, t)?;
    let s_hat = l_transform(f.s(), t)?;
    let threshold = tol * f.tube_norms().first().copied().unwrap_or(0.0);
    let mut rank = 0;
    for i in 0..f.q() {
        let max_abs = (0..a.p())
            .map(|k| s_hat.get(i, i, k).abs())
            .fold(0.0f64, f64::max);
        if max_abs > threshold {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Mean matrix rank of the transformed frontal slices, with per-slice ranks
/// counting singular values above `tol` times that slice's largest one.
pub fn average_rank(a: &Tensor3, t: &TransformSpec, tol: f64) -> Result<f64> {
    let a_hat = l_transform(a, t)?;
    let p = a.p();
    let ranks: Vec<usize> = (0..p)
        .into_par_iter()
        .map(|k| {
            let (_, sigma, _) = sorted_svd(&a_hat.frontal_slice(k))?;
            let top = sigma.first().copied().unwrap_or(0.0);
            Ok(sigma.iter().filter(|&&s| s > tol * top && top > 0.0).count())
        })
        .collect::<Result<_>>()?;
    Ok(ranks.iter().sum::<usize>() as f64 / p as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{c_identity, is_f_diagonal, is_f_orthogonal};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_tensor(m: usize, n: usize, p: usize, seed: u64) -> Tensor3 {
        let mut rng = StdRng::seed_from_u64(seed);
        Tensor3::from_fn(m, n, p, |_, _, _| rng.random_range(-1.0..1.0))
    }

    /// Unit lateral slice in the transform domain: every transformed frontal
    /// slice is a unit column vector.
    fn random_hat_unit_slice(m: usize, p: usize, rng: &mut StdRng, t: &TransformSpec) -> Tensor3 {
        let mut hat = Tensor3::zeros(m, 1, p);
        for k in 0..p {
            let col: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (i, v) in col.iter().enumerate() {
                hat.set(i, 0, k, v / norm);
            }
        }
        l_inverse(&hat, t).unwrap()
    }

    /// `u *_c diag(tube) *_c v^T` with transform-domain unit slices `u`, `v`.
    fn rank_one(m: usize, n: usize, p: usize, tube: &[f64], seed: u64, t: &TransformSpec) -> Tensor3 {
        let mut rng = StdRng::seed_from_u64(seed);
        let u = random_hat_unit_slice(m, p, &mut rng, t);
        let v = random_hat_unit_slice(n, p, &mut rng, t);
        let s = Tube::new(tube.to_vec()).to_tensor3();
        let us = c_product(&u, &s, t).unwrap();
        c_product(&us, &c_transpose(&v), t).unwrap()
    }

    #[test]
    fn zero_tensor_has_zero_spectrum_and_exact_reconstruction() {
        let t = TransformSpec::dct(3);
        let a = Tensor3::zeros(4, 3, 3);
        let f = csvd(&a, &t).unwrap();
        assert!(f.tube_norms().iter().all(|&x| x == 0.0));
        assert!(f.reconstruct().unwrap().frobenius_norm() <= 1e-14);
    }

    #[test]
    fn identity_tensor_tube_norms() {
        let t = TransformSpec::dct(2);
        let id = c_identity(3, 2, &t).unwrap();
        let f = csvd(id.realized(), &t).unwrap();
        assert_eq!(f.q(), 3);
        for &norm in f.tube_norms() {
            assert_relative_eq!(norm, 2.0f64.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn random_tensor_reconstruction_and_orthogonality() {
        let t = TransformSpec::dct(3);
        let a = random_tensor(6, 4, 3, 1);
        let f = csvd(&a, &t).unwrap();
        let err = (&f.reconstruct().unwrap() - &a).frobenius_norm();
        assert!(err <= 1e-12 * a.frobenius_norm());
        assert!(is_f_orthogonal(f.u(), &t, 1e-10).unwrap());
        assert!(is_f_orthogonal(f.v(), &t, 1e-10).unwrap());
        // Middle factor f-diagonal in the transform domain, and spatially
        // (the inverse transform preserves the diagonal support pattern).
        let s_hat = l_transform(f.s(), &t).unwrap();
        assert!(is_f_diagonal(&s_hat, 1e-12));
        assert!(is_f_diagonal(f.s(), 1e-12));
    }

    #[test]
    fn tube_norms_are_non_increasing() {
        let t = TransformSpec::dct(4);
        let a = random_tensor(8, 5, 4, 3);
        let f = csvd(&a, &t).unwrap();
        for w in f.tube_norms().windows(2) {
            assert!(w[0] >= w[1]);
        }
        // Under the orthogonal transform the stored norms equal the
        // Euclidean norms of the spatial singular tubes.
        for i in 0..f.q() {
            assert_relative_eq!(
                f.tube_norms()[i],
                f.singular_tube(i).norm(),
                epsilon = 1e-12 * f.tube_norms()[0]
            );
        }
    }

    #[test]
    fn spectrum_energy_identity() {
        let t = TransformSpec::dct(4);
        let a = random_tensor(8, 5, 4, 5);
        let f = csvd(&a, &t).unwrap();
        let total: f64 = f.tube_norms().iter().map(|x| x * x).sum();
        assert_relative_eq!(total, a.frobenius_norm().powi(2), max_relative = 1e-10);
    }

    #[test]
    fn truncation_at_full_rank_reconstructs() {
        let t = TransformSpec::dct(2);
        let a = random_tensor(5, 4, 2, 7);
        let f = csvd(&a, &t).unwrap();
        let err = (&f.truncate(f.q()).unwrap() - &a).frobenius_norm();
        assert!(err <= 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn rank_one_instance_is_exact_at_r1() {
        let t = TransformSpec::dct(3);
        let a = rank_one(5, 4, 3, &[2.0, -1.0, 0.5], 11, &t);
        let f = csvd(&a, &t).unwrap();
        let err = (&f.truncate(1).unwrap() - &a).frobenius_norm();
        assert!(err <= 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn truncation_error_matches_discarded_spectrum() {
        let t = TransformSpec::dct(4);
        let a = random_tensor(8, 6, 4, 13);
        let f = csvd(&a, &t).unwrap();
        let s_hat = l_transform(f.s(), &t).unwrap();
        let r = 3;
        let truncated = f.truncate(r).unwrap();
        let err2 = (&truncated - &a).frobenius_norm().powi(2);
        let discarded: f64 = (r..f.q())
            .map(|i| (0..4).map(|k| s_hat.get(i, i, k).powi(2)).sum::<f64>())
            .sum();
        assert_relative_eq!(err2, discarded, max_relative = 1e-10);
    }

    #[test]
    fn truncation_error_is_monotone_in_rank() {
        let t = TransformSpec::dct(3);
        let a = random_tensor(7, 6, 3, 17);
        let f = csvd(&a, &t).unwrap();
        let mut prev = f64::INFINITY;
        for r in 1..=f.q() {
            let err = (&f.truncate(r).unwrap() - &a).frobenius_norm();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
        assert!(prev <= 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn truncation_rank_out_of_range_errors() {
        let t = TransformSpec::dct(2);
        let f = csvd(&random_tensor(3, 3, 2, 19), &t).unwrap();
        assert!(f.truncate(0).is_err());
        assert!(f.truncate(4).is_err());
    }

    #[test]
    fn tubal_rank_cases() {
        let t = TransformSpec::dct(3);
        assert_eq!(tubal_rank(&Tensor3::zeros(4, 4, 3), &t, 1e-8).unwrap(), 0);

        let t2 = TransformSpec::dct(2);
        let id = c_identity(5, 2, &t2).unwrap();
        assert_eq!(tubal_rank(id.realized(), &t2, 1e-8).unwrap(), 5);

        let a = rank_one(6, 5, 3, &[3.0, 1.0, -2.0], 21, &t);
        let b = rank_one(6, 5, 3, &[1.0, 0.5, 0.25], 23, &t);
        assert_eq!(tubal_rank(&(&a + &b), &t, 1e-8).unwrap(), 2);
    }

    #[test]
    fn tubal_rank_of_truncation_is_bounded() {
        let t = TransformSpec::dct(3);
        let a = random_tensor(6, 6, 3, 25);
        let f = csvd(&a, &t).unwrap();
        for r in [1, 2, 4] {
            let w = f.truncate(r).unwrap();
            assert!(tubal_rank(&w, &t, 1e-8).unwrap() <= r);
        }
    }

    #[test]
    fn explicit_transform_factorization_holds() {
        // A non-orthogonal invertible transform: the factorization and the
        // ordering of tube norms must still hold (norms are defined in the
        // transform domain).
        let mut rng = StdRng::seed_from_u64(27);
        let z = DMatrix::from_fn(3, 3, |i, j| {
            if i == j { 2.0 } else { rng.random_range(-0.3..0.3) }
        });
        let t = TransformSpec::explicit(z).unwrap();
        let a = random_tensor(6, 5, 3, 29);
        let f = csvd(&a, &t).unwrap();
        let err = (&f.reconstruct().unwrap() - &a).frobenius_norm();
        assert!(err <= 1e-10 * a.frobenius_norm());
        for w in f.tube_norms().windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(is_f_orthogonal(f.u(), &t, 1e-10).unwrap());
    }

    #[test]
    fn average_rank_cases() {
        let t = TransformSpec::dct(3);
        assert_eq!(average_rank(&Tensor3::zeros(4, 4, 3), &t, 1e-8).unwrap(), 0.0);

        let t3 = TransformSpec::dct(3);
        let id = c_identity(4, 3, &t3).unwrap();
        assert_relative_eq!(average_rank(id.realized(), &t3, 1e-8).unwrap(), 4.0);

        // Transformed slices constructed with ranks 1, 2, 3.
        let mut hat = Tensor3::zeros(4, 4, 3);
        for k in 0..3 {
            for d in 0..=k {
                hat.set(d, d, k, 1.0 + d as f64);
            }
        }
        let a = l_inverse(&hat, &t).unwrap();
        assert_relative_eq!(average_rank(&a, &t, 1e-8).unwrap(), 2.0, epsilon = 1e-12);
    }
}
