//! Complex matrix helpers shared across the solver modules.
//!
//! Hermitian positive-definite systems are factorized with Cholesky and
//! never inverted explicitly; near-singular systems get an escalating
//! diagonal jitter (starting at 1e-12 of the diagonal scale) before the
//! solve is declared failed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

#[inline]
pub fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// e^{i*phase} as a unit-modulus complex number.
#[inline]
pub fn phasor(phase: f64) -> C64 {
    C64::new(phase.cos(), phase.sin())
}

/// Force exact Hermitian symmetry: (a + a^H)/2.
pub fn hermitize(a: &CMat) -> CMat {
    let at = a.adjoint();
    (a + at).scale(0.5)
}

/// nalgebra's complex Cholesky happily takes the square root of a negative
/// pivot (it becomes imaginary), so a successful factorization must also be
/// checked for a real, strictly positive diagonal.
fn checked_cholesky(h: CMat) -> Option<Cholesky<C64, Dyn>> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].re.abs()).fold(0.0_f64, f64::max).max(1e-300);
    let ch = Cholesky::new(h)?;
    let l = ch.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || d.im.abs() > 1e-8 * scale.sqrt() {
            return None;
        }
    }
    Some(ch)
}

fn cholesky_with_jitter(a: &CMat, context: &'static str) -> Result<Cholesky<C64, Dyn>> {
    let n = a.nrows();
    let h = hermitize(a);
    if let Some(ch) = checked_cholesky(h.clone()) {
        return Ok(ch);
    }
    // Diagonal scale for the jitter; fall back to 1 for all-zero matrices.
    let scale = (0..n)
        .map(|i| h[(i, i)].re.abs())
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let mut jitter = 1e-12 * scale;
    for _ in 0..6 {
        let mut hj = h.clone();
        for i in 0..n {
            hj[(i, i)] += cx(jitter, 0.0);
        }
        if let Some(ch) = checked_cholesky(hj) {
            return Ok(ch);
        }
        jitter *= 10.0;
    }
    Err(Error::SingularMatrix(context))
}

/// Solve `a x = b` for Hermitian positive-definite `a`.
pub fn hpd_solve(a: &CMat, b: &CMat, context: &'static str) -> Result<CMat> {
    let ch = cholesky_with_jitter(a, context)?;
    Ok(ch.solve(b))
}

/// Inverse of a Hermitian positive-definite matrix via its Cholesky factor.
pub fn hpd_inverse(a: &CMat, context: &'static str) -> Result<CMat> {
    let n = a.nrows();
    hpd_solve(a, &CMat::identity(n, n), context)
}

/// log det of a Hermitian positive-definite matrix (natural log).
pub fn logdet_hpd(a: &CMat, context: &'static str) -> Result<f64> {
    let ch = cholesky_with_jitter(a, context)?;
    let l = ch.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::SingularMatrix(context));
        }
        acc += d.ln();
    }
    Ok(2.0 * acc)
}

/// Real part of tr(a b).
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let p = a[(i, j)] * b[(j, i)];
            acc += p.re;
        }
    }
    acc
}

/// Frobenius inner product Re tr(a^H b).
pub fn frob_inner_re(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Squared Frobenius norm.
pub fn frob_sq(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Sample of the circularly-symmetric standard complex Gaussian CN(0, 1):
/// real and imaginary parts are independent N(0, 1/2).
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn random_cmat<R: Rng + ?Sized>(rng: &mut R, nrows: usize, ncols: usize) -> CMat {
    CMat::from_fn(nrows, ncols, |_, _| sample_cn(rng))
}

/// Vector with i.i.d. CN(0, 1) entries.
pub fn random_cvec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| sample_cn(rng))
}

/// Vector of unit-modulus entries with i.i.d. uniform phases.
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| phasor(rng.random::<f64>() * std::f64::consts::TAU))
}
