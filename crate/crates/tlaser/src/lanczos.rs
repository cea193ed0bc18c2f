//! Partial tensor Lanczos bidiagonalization under the c-product, with full
//! reorthogonalization, and extraction of approximate singular triplets.
//!
//! `k` steps on `A` (`m x n x p`) produce bases `P_k` (`n x k x p`) and `Q_k`
//! (`m x k x p`) with f-orthonormal lateral slices, an f-upper-bidiagonal
//! tensor `B_k` (`k x k x p`) whose diagonal and superdiagonal hold the
//! recurrence tubes, and a residual slice `R_k` (`n x p`) satisfying
//!
//! ```text
//! A   *_c P_k = Q_k *_c B_k
//! A^T *_c Q_k = P_k *_c B_k^T + R_k *_c E_k^T
//! ```
//!
//! where `E_k` is the `k`-th lateral slice of the c-identity. The c-SVD of
//! `B_k` approximates the leading singular triplets of `A`; the quality of
//! triplet `i` is measured by the Frobenius norm of
//! `beta_k *_c P_{k+1} *_c E_k^T *_c U_i`, which vanishes as the triplet
//! converges.
//!
//! In the transform domain every step decouples into independent per-slice
//! vector recurrences, which is how the iteration is carried out; tensors are
//! only transformed at entry and exit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{c_identity, c_product, c_transpose};
use crate::csvd::csvd;
use crate::error::{Error, Result};
use crate::tensor::{LateralSlice, Tensor3, Tube};
use crate::transform::{l_inverse, l_transform, TransformSpec};

/// Relative threshold below which a transform-domain slice norm is treated as
/// degenerate during normalization.
const NORMALIZE_TOL: f64 = 1e-13;

/// Relative threshold on the global residual norm that triggers breakdown.
const BREAKDOWN_TOL: f64 = 1e-12;

/// Result of `k` bidiagonalization steps.
#[derive(Debug, Clone)]
pub struct BidiagState {
    p_basis: Tensor3,
    q_basis: Tensor3,
    b: Tensor3,
    residual: LateralSlice,
    k: usize,
    breakdown: bool,
}

impl BidiagState {
    /// Right Krylov basis `P_k`, shape `n x k x p`.
    pub fn p_basis(&self) -> &Tensor3 {
        &self.p_basis
    }

    /// Left Krylov basis `Q_k`, shape `m x k x p`.
    pub fn q_basis(&self) -> &Tensor3 {
        &self.q_basis
    }

    /// f-upper-bidiagonal projection `B_k`, shape `k x k x p`. Tubes strictly
    /// below the diagonal and beyond the first superdiagonal are exactly zero.
    pub fn b(&self) -> &Tensor3 {
        &self.b
    }

    /// Unnormalized residual slice `R_k`, shape `n x p`.
    pub fn residual(&self) -> &LateralSlice {
        &self.residual
    }

    /// Steps actually performed; less than requested only on breakdown.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Whether the iteration terminated early because the residual vanished
    /// (the factorization is then exact to working precision).
    pub fn breakdown(&self) -> bool {
        self.breakdown
    }
}

/// One approximate singular triplet of `A` lifted from the projection.
#[derive(Debug, Clone)]
pub struct TripletEstimate {
    pub s_tube: Tube,
    pub u_slice: LateralSlice,
    pub v_slice: LateralSlice,
    /// Frobenius norm of `beta_k *_c P_{k+1} *_c E_k^T *_c U_i`.
    pub residual_norm: f64,
    /// `residual_norm <= eps` for the tolerance supplied at computation.
    pub converged: bool,
}

/// Normalize per-slice transform-domain columns. Columns with norm at or
/// below `tol_abs` are replaced by the first canonical basis vector with a
/// zero coefficient.
fn normalize_hat_columns(cols: &[DVector<f64>], tol_abs: f64) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut out = Vec::with_capacity(cols.len());
    let mut alphas = Vec::with_capacity(cols.len());
    for col in cols {
        let norm = col.norm();
        if norm > tol_abs {
            out.push(col / norm);
            alphas.push(norm);
        } else {
            let mut e1 = DVector::zeros(col.len());
            e1[0] = 1.0;
            out.push(e1);
            alphas.push(0.0);
        }
    }
    (out, alphas)
}

/// Normalize a lateral slice to per-slice unit transform-domain columns.
///
/// Returns `(q, alpha)` with `q *_c alpha == x` whenever no slice was
/// degenerate; degenerate slices (transform-domain norm at most
/// `tol * ||x||_F`) receive the first canonical basis vector and a zero
/// coefficient. An entirely zero input is an error: there is no direction to
/// normalize.
pub fn normalize_slice(
    x: &LateralSlice,
    t: &TransformSpec,
    tol: f64,
) -> Result<(LateralSlice, Tube)> {
    let norm = x.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot normalize an all-zero lateral slice".into(),
        ));
    }
    let x_hat = l_transform(&x.to_tensor3(), t)?;
    let cols: Vec<DVector<f64>> = (0..x.p())
        .map(|k| DVector::from_fn(x.m(), |i, _| x_hat.get(i, 0, k)))
        .collect();
    let (q_cols, alphas) = normalize_hat_columns(&cols, tol * norm);

    let mut q_hat = Tensor3::zeros(x.m(), 1, x.p());
    for (k, col) in q_cols.iter().enumerate() {
        for i in 0..x.m() {
            q_hat.set(i, 0, k, col[i]);
        }
    }
    let q = LateralSlice::from_tensor3(&l_inverse(&q_hat, t)?)?;
    let alpha_hat = Tensor3::from_vec_unchecked(1, 1, x.p(), alphas);
    let alpha = Tube::from_tensor3(&l_inverse(&alpha_hat, t)?)?;
    Ok((q, alpha))
}

/// Deterministic unit vector orthogonal to `cols`: the canonical basis
/// candidate with the largest residual after projection (lowest index on
/// ties), orthogonalized twice and normalized. Requires `cols.len() < dim`.
fn orthonormal_completion(cols: &[DVector<f64>], dim: usize) -> DVector<f64> {
    debug_assert!(cols.len() < dim);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for c in 0..dim {
        let mut v = DVector::zeros(dim);
        v[c] = 1.0;
        for q in cols {
            let t = q.dot(&v);
            v.axpy(-t, q, 1.0);
        }
        let norm = v.norm();
        if norm > best.0 {
            best = (norm, c);
        }
    }
    let mut v = DVector::zeros(dim);
    v[best.1] = 1.0;
    for _ in 0..2 {
        for q in cols {
            let t = q.dot(&v);
            v.axpy(-t, q, 1.0);
        }
    }
    let n = v.norm();
    v / n
}

/// Per-slice working state of the iteration in the transform domain.
struct HatBasis {
    /// `cols[s]` holds the basis vectors of transform-domain slice `s`.
    cols: Vec<Vec<DVector<f64>>>,
}

impl HatBasis {
    fn new(p: usize) -> Self {
        HatBasis {
            cols: vec![Vec::new(); p],
        }
    }

    fn push(&mut self, vecs: Vec<DVector<f64>>) {
        for (s, v) in vecs.into_iter().enumerate() {
            self.cols[s].push(v);
        }
    }

    fn len(&self) -> usize {
        self.cols[0].len()
    }

    fn truncate(&mut self, len: usize) {
        for c in &mut self.cols {
            c.truncate(len);
        }
    }

    /// One modified Gram-Schmidt pass of `r` against every stored vector.
    fn reorthogonalize(&self, r: &mut [DVector<f64>]) {
        for (s, rs) in r.iter_mut().enumerate() {
            for c in &self.cols[s] {
                let coeff = c.dot(rs);
                rs.axpy(-coeff, c, 1.0);
            }
        }
    }

    /// Assemble into a spatial tensor of shape `dim x len x p`.
    fn to_tensor(&self, dim: usize, t: &TransformSpec) -> Result<Tensor3> {
        let p = self.cols.len();
        let len = self.len();
        let mut hat = Tensor3::zeros(dim, len, p);
        for (s, cols) in self.cols.iter().enumerate() {
            for (j, col) in cols.iter().enumerate() {
                for i in 0..dim {
                    hat.set(i, j, s, col[i]);
                }
            }
        }
        l_inverse(&hat, t)
    }
}

fn hat_columns(x: &LateralSlice, t: &TransformSpec) -> Result<Vec<DVector<f64>>> {
    let x_hat = l_transform(&x.to_tensor3(), t)?;
    Ok((0..x.p())
        .map(|k| DVector::from_fn(x.m(), |i, _| x_hat.get(i, 0, k)))
        .collect())
}

fn slice_from_hat_columns(cols: &[DVector<f64>], m: usize, t: &TransformSpec) -> Result<LateralSlice> {
    let mut hat = Tensor3::zeros(m, 1, cols.len());
    for (k, col) in cols.iter().enumerate() {
        for i in 0..m {
            hat.set(i, 0, k, col[i]);
        }
    }
    LateralSlice::from_tensor3(&l_inverse(&hat, t)?)
}

fn global_norm(cols: &[DVector<f64>]) -> f64 {
    cols.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
}

/// Normalize per-slice columns against a problem-scale degeneracy threshold.
/// A degenerate slice (its recurrence exhausted) receives a deterministic
/// orthonormal completion of the basis with coefficient zero, so the basis
/// stays f-orthonormal slice by slice.
fn normalize_or_complete(
    cols: &[DVector<f64>],
    tol_abs: f64,
    basis: &HatBasis,
) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut out = Vec::with_capacity(cols.len());
    let mut coeffs = Vec::with_capacity(cols.len());
    for (s, col) in cols.iter().enumerate() {
        let norm = col.norm();
        if norm > tol_abs {
            out.push(col / norm);
            coeffs.push(norm);
        } else {
            out.push(orthonormal_completion(&basis.cols[s], col.len()));
            coeffs.push(0.0);
        }
    }
    (out, coeffs)
}

/// Partial tensor Lanczos bidiagonalization with full reorthogonalization.
///
/// `p1` is the start slice (`n x p`, any nonzero content; it is normalized
/// internally). Performs `k` steps unless the residual vanishes first, in
/// which case the returned state has fewer steps and the breakdown flag set.
pub fn lanczos_bidiag(
    a: &Tensor3,
    p1: &LateralSlice,
    k: usize,
    t: &TransformSpec,
) -> Result<BidiagState> {
    let (m, n, p) = a.dims();
    if k < 1 || k > m.min(n) {
        return Err(Error::invalid(format!(
            "step count {} outside 1..={}",
            k,
            m.min(n)
        )));
    }
    if p1.m() != n || p1.p() != p {
        return Err(Error::shape(format!(
            "start slice is {}x{}, expected {}x{}",
            p1.m(),
            p1.p(),
            n,
            p
        )));
    }
    let norm_a = a.frobenius_norm();
    let a_hat = l_transform(a, t)?;
    let a_slices: Vec<DMatrix<f64>> = (0..p).map(|s| a_hat.frontal_slice(s)).collect();

    // Normalized start slice in the transform domain.
    let p1_cols = hat_columns(p1, t)?;
    let start_norm = global_norm(&p1_cols);
    if start_norm == 0.0 {
        return Err(Error::DegenerateInput("start slice is zero".into()));
    }
    let (p1_cols, _) = normalize_hat_columns(&p1_cols, NORMALIZE_TOL * start_norm);

    let mut p_basis = HatBasis::new(p);
    let mut q_basis = HatBasis::new(p);
    p_basis.push(p1_cols);

    // alpha[i][s], beta[i][s] in the transform domain.
    let mut alphas: Vec<Vec<f64>> = Vec::new();
    let mut betas: Vec<Vec<f64>> = Vec::new();

    // First left vector: Q_1 = Normalize(A *_c P_1).
    let w: Vec<DVector<f64>> = (0..p).map(|s| &a_slices[s] * &p_basis.cols[s][0]).collect();
    let w_norm = global_norm(&w);
    if w_norm <= BREAKDOWN_TOL * norm_a {
        return Err(Error::DegenerateInput(
            "A *_c P_1 vanishes; supply a different start slice".into(),
        ));
    }
    let (q1, alpha1) = normalize_hat_columns(&w, NORMALIZE_TOL * w_norm);
    q_basis.push(q1);
    alphas.push(alpha1);

    let mut steps = 1usize;
    let mut breakdown = false;
    let mut residual_cols: Vec<DVector<f64>> = Vec::new();
    let degenerate_tol = BREAKDOWN_TOL * norm_a;

    for i in 0..k {
        // Residual of the right recurrence: r = A^T q_i - alpha_i p_i.
        let mut r: Vec<DVector<f64>> = (0..p)
            .map(|s| {
                let mut rs = a_slices[s].transpose() * &q_basis.cols[s][i];
                rs.axpy(-alphas[i][s], &p_basis.cols[s][i], 1.0);
                rs
            })
            .collect();
        p_basis.reorthogonalize(&mut r);

        let r_norm = global_norm(&r);
        if r_norm <= degenerate_tol {
            // The factorization is exact to working precision.
            residual_cols = r;
            steps = i + 1;
            breakdown = true;
            break;
        }
        if i == k - 1 {
            residual_cols = r;
            steps = k;
            break;
        }

        let (p_next, beta_i) = normalize_or_complete(&r, degenerate_tol, &p_basis);
        p_basis.push(p_next);
        betas.push(beta_i);

        // Next left vector: w = A p_{i+1} - beta_i q_i, reorthogonalized.
        // If the left recurrence exhausts (the range of A is spanned), the
        // completion carries a zero alpha tube and the following residual
        // triggers breakdown.
        let mut w: Vec<DVector<f64>> = (0..p)
            .map(|s| {
                let mut ws = &a_slices[s] * &p_basis.cols[s][i + 1];
                ws.axpy(-betas[i][s], &q_basis.cols[s][i], 1.0);
                ws
            })
            .collect();
        q_basis.reorthogonalize(&mut w);

        let (q_next, alpha_next) = normalize_or_complete(&w, degenerate_tol, &q_basis);
        q_basis.push(q_next);
        alphas.push(alpha_next);
        steps = i + 2;
    }

    p_basis.truncate(steps);
    q_basis.truncate(steps);

    let mut b_hat = Tensor3::zeros(steps, steps, p);
    for s in 0..p {
        for i in 0..steps {
            b_hat.set(i, i, s, alphas[i][s]);
            if i + 1 < steps {
                b_hat.set(i, i + 1, s, betas[i][s]);
            }
        }
    }

    Ok(BidiagState {
        p_basis: p_basis.to_tensor(n, t)?,
        q_basis: q_basis.to_tensor(m, t)?,
        b: l_inverse(&b_hat, t)?,
        residual: slice_from_hat_columns(&residual_cols, n, t)?,
        k: steps,
        breakdown,
    })
}

/// Deterministic random start slice: uniform entries seeded by `seed`, then
/// normalized to per-slice unit transform-domain columns.
pub fn seeded_start_slice(n: usize, p: usize, seed: u64, t: &TransformSpec) -> Result<LateralSlice> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = LateralSlice::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let (q, _) = normalize_slice(&raw, t, NORMALIZE_TOL)?;
    Ok(q)
}

/// Approximate the `l` dominant singular triplets of `a` with `k` Lanczos
/// steps from a seeded random start slice.
///
/// Requires `l < k <= min(m, n)`. Returns the triplets in non-increasing
/// order of singular tube norm. If the iteration breaks down before `l`
/// triplets are resolvable, the prefix that is resolvable (one triplet per
/// completed step) is returned; breakdown means the factorization became
/// exact, so those triplets carry zero residuals.
pub fn approx_triplets(
    a: &Tensor3,
    l: usize,
    k: usize,
    eps: f64,
    t: &TransformSpec,
    seed: u64,
) -> Result<Vec<TripletEstimate>> {
    let (m, n, _) = a.dims();
    if l < 1 || l >= k {
        return Err(Error::invalid(format!(
            "need 1 <= l < k, got l = {l}, k = {k}"
        )));
    }
    if k > m.min(n) {
        return Err(Error::invalid(format!(
            "step count {} exceeds min(m, n) = {}",
            k,
            m.min(n)
        )));
    }

    let start = seeded_start_slice(n, a.p(), seed, t)?;
    let state = lanczos_bidiag(a, &start, k, t)?;
    triplets_from_state(a, &state, l, eps, t)
}

/// Lift triplets from a completed bidiagonalization (Eq.-style:
/// `U_i^A = Q_k *_c U_i`, `V_i^A = P_k *_c V_i`, `s_i^A = s_i`).
pub fn triplets_from_state(
    a: &Tensor3,
    state: &BidiagState,
    l: usize,
    eps: f64,
    t: &TransformSpec,
) -> Result<Vec<TripletEstimate>> {
    let k_done = state.k();
    let l_eff = l.min(k_done);
    let fb = csvd(state.b(), t)?;

    // Residual factor beta_k and the next right direction P_{k+1}; absent
    // when the residual vanished (breakdown), in which case every lifted
    // triplet is exact and the residual term is zero.
    let norm_a = a.frobenius_norm();
    let res_norm = state.residual().frobenius_norm();
    let lift_residual = if state.breakdown() || res_norm <= BREAKDOWN_TOL * norm_a {
        None
    } else {
        let (p_next, beta) = normalize_slice(state.residual(), t, NORMALIZE_TOL)?;
        // P_{k+1} *_c beta_k, an n x 1 x p tensor reused for every triplet.
        let scaled = c_product(&p_next.to_tensor3(), &beta.to_tensor3(), t)?;
        // E_k: k-th lateral slice of the c-identity, so E_k^T extracts the
        // last tube row in the transform domain.
        let e_k = c_identity(k_done, a.p(), t)?
            .realized()
            .lateral_slice(k_done - 1);
        Some(c_product(&scaled, &c_transpose(&e_k.to_tensor3()), t)?)
    };

    let mut out = Vec::with_capacity(l_eff);
    for i in 0..l_eff {
        let u_i = fb.u().lateral_slice(i).to_tensor3();
        let v_i = fb.v().lateral_slice(i).to_tensor3();
        let u_slice = LateralSlice::from_tensor3(&c_product(state.q_basis(), &u_i, t)?)?;
        let v_slice = LateralSlice::from_tensor3(&c_product(state.p_basis(), &v_i, t)?)?;
        let residual_norm = match &lift_residual {
            Some(res) => c_product(res, &u_i, t)?.frobenius_norm(),
            None => 0.0,
        };
        out.push(TripletEstimate {
            s_tube: fb.singular_tube(i),
            u_slice,
            v_slice,
            residual_norm,
            converged: residual_norm <= eps,
        });
    }
    Ok(out)
}
