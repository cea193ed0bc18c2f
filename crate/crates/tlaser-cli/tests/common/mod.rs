//! Shared fixtures for the CLI and acceptance suites.

use std::path::Path;
use std::process::Command;

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tlaser::{l_inverse, matrix_frobenius_norm, Tensor3, TnsData, TnsDtype, TransformSpec};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tlaser"))
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_tensor(m: usize, n: usize, p: usize, seed: u64) -> Tensor3 {
    let mut rng = StdRng::seed_from_u64(seed);
    Tensor3::from_fn(m, n, p, |_, _, _| rng.random_range(-1.0..1.0))
}

pub fn write_matrix(path: &Path, w: &DMatrix<f64>) {
    tlaser::write_tns(path, &TnsData::Matrix(w.clone()), TnsDtype::F64).unwrap();
}

pub fn write_tensor(path: &Path, t: &Tensor3) {
    tlaser::write_tns(path, &TnsData::Tensor(t.clone()), TnsDtype::F64).unwrap();
}

/// One random head block replicated across all heads plus relative noise.
pub fn replicated_attention_weight(
    d_m: usize,
    n_h: usize,
    noise_rel: f64,
    seed: u64,
) -> DMatrix<f64> {
    let d_h = d_m / n_h;
    let mut rng = StdRng::seed_from_u64(seed);
    let block = DMatrix::from_fn(d_h, d_m, |_, _| rng.random_range(-1.0..1.0));
    let mut w = DMatrix::zeros(d_m, d_m);
    for h in 0..n_h {
        for i in 0..d_h {
            for j in 0..d_m {
                w[(h * d_h + i, j)] = block[(i, j)];
            }
        }
    }
    if noise_rel > 0.0 {
        let noise = DMatrix::from_fn(d_m, d_m, |_, _| rng.random_range(-1.0..1.0));
        let scale = noise_rel * matrix_frobenius_norm(&w) / matrix_frobenius_norm(&noise);
        w += noise * scale;
    }
    w
}

/// Tensor whose transform-domain slices share a prescribed spectrum with
/// random orthogonal factors.
pub fn tensor_with_hat_spectra(
    m: usize,
    n: usize,
    p: usize,
    spectrum: &[f64],
    seed: u64,
    t: &TransformSpec,
) -> Tensor3 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut hat = Tensor3::zeros(m, n, p);
    for s in 0..p {
        let qu = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let qv = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let mut d = DMatrix::zeros(m, n);
        for (i, &sv) in spectrum.iter().enumerate().take(m.min(n)) {
            d[(i, i)] = sv;
        }
        hat.set_frontal_slice(s, &(qu * d * qv.transpose()));
    }
    l_inverse(&hat, t).unwrap()
}
