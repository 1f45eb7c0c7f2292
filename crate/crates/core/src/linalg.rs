//! Small dense linear-algebra helpers for Hermitian matrices and complex
//! Gaussian sampling.

use crate::{CMatrix, CVector, Complex64};
use nalgebra::linalg::{Cholesky, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Projects a (nearly) Hermitian matrix onto the PSD cone by clipping
/// negative eigenvalues to zero. Returns the projected matrix and the
/// smallest eigenvalue before clipping.
pub fn clip_psd(a: &CMatrix) -> (CMatrix, f64) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return (hermitian_part(a), min);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let u = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&clipped.map(|v| Complex64::new(v, 0.0)));
    (hermitian_part(&(u * d * u.adjoint())), min)
}

/// Returns `F` with `F Fᴴ = A` for a Hermitian PSD `A`, using an
/// eigendecomposition so that rank-deficient matrices are handled.
pub fn psd_factor(a: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let roots = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * CMatrix::from_diagonal(&roots)
}

/// Smallest and largest eigenvalues of a Hermitian matrix.
pub fn eigen_range(a: &CMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(a: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(hermitian_part(a)).map(|c| c.inverse())
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn hpd_solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    Cholesky::new(hermitian_part(a)).map(|c| c.solve(b))
}

/// One draw from CN(0, 1): independent real and imaginary parts with
/// variance 1/2 each.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Vector of `n` i.i.d. CN(0, 1) draws.
pub fn standard_complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| standard_complex_normal(rng))
}

/// Maximum absolute entry, used for relative tolerances.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
