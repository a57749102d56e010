//! Small dense complex linear-algebra helpers on top of `faer`.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// Dense complex matrix.
pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn adjoint(m: MatRef<'_, C64>) -> CMat {
    m.adjoint().to_owned()
}

/// Kronecker product with `a` acting on the more significant index.
pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn frobenius(m: MatRef<'_, C64>) -> f64 {
    m.norm_l2()
}

/// ‖a − b‖_F
pub fn distance(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    (a - b).norm_l2()
}

pub fn commutator(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    a * b - b * a
}

/// ‖m − m†‖_F
pub fn hermitian_residual(m: MatRef<'_, C64>) -> f64 {
    (m - m.adjoint()).norm_l2()
}

/// ‖u u† − 1‖_F
pub fn unitarity_residual(u: MatRef<'_, C64>) -> f64 {
    let n = u.nrows();
    (u * u.adjoint() - identity(n)).norm_l2()
}

pub fn trace(m: MatRef<'_, C64>) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen(n))?;
    let vals: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let vecs = evd.U().to_owned();
    // faer returns ascending order already; keep the invariant explicit.
    debug_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    Ok((vals, vecs))
}

pub fn eigvalsh(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::Eigen(n))?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// exp(coeff · h) for Hermitian `h` through its eigendecomposition.
pub fn hermitian_exp(h: MatRef<'_, C64>, coeff: C64) -> Result<CMat> {
    let (vals, vecs) = eigh(h)?;
    Ok(scaled_by_spectrum(&vecs, &vals, |e| (coeff * e).exp()))
}

/// V · diag(f(λ)) · V†
pub fn scaled_by_spectrum(vecs: &CMat, vals: &[f64], f: impl Fn(f64) -> C64) -> CMat {
    let n = vecs.nrows();
    let phases: Vec<C64> = vals.iter().map(|&e| f(e)).collect();
    let scaled = Mat::from_fn(n, vals.len(), |i, j| vecs[(i, j)] * phases[j]);
    &scaled * vecs.adjoint()
}
