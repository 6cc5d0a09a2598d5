//! Classical reference detectors: zero forcing, MMSE and exhaustive ML.

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{Error, Result};

/// Largest ML search space, in candidates.
pub const ML_MAX_CANDIDATES: u64 = 1 << 20;

/// `||y - H x||^2`.
pub fn residual(y: &[Complex64], h: &DMatrix<Complex64>, x: &[Complex64]) -> f64 {
    let mut total = 0.0;
    for i in 0..h.nrows() {
        let mut r = y[i];
        for (j, xj) in x.iter().enumerate() {
            r -= h[(i, j)] * xj;
        }
        total += r.norm_sqr();
    }
    total
}

fn check_dims(y: &[Complex64], h: &DMatrix<Complex64>) -> Result<()> {
    if y.len() != h.nrows() {
        return Err(Error::LengthMismatch {
            what: "received vector vs channel rows",
            left: y.len(),
            right: h.nrows(),
        });
    }
    Ok(())
}

/// Minimum-norm least-squares estimate `H^+ y`.
pub fn zf_estimate(y: &[Complex64], h: &DMatrix<Complex64>) -> Result<DVector<Complex64>> {
    check_dims(y, h)?;
    let svd = SVD::try_new(h.clone(), true, true, 1e-15, 0).ok_or(Error::SvdFailed)?;
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * h.nrows().max(h.ncols()) as f64;
    let b = DVector::from_column_slice(y);
    svd.solve(&b, tol).map_err(|_| Error::SvdFailed)
}

/// `(H^H H + sigma0^2 I)^{-1} H^H y`.
pub fn mmse_estimate(y: &[Complex64], h: &DMatrix<Complex64>, sigma0_sq: f64) -> Result<DVector<Complex64>> {
    check_dims(y, h)?;
    if !(sigma0_sq > 0.0) || !sigma0_sq.is_finite() {
        return Err(Error::invalid("sigma0_sq", format!("{sigma0_sq} must be positive and finite")));
    }
    let hh = h.adjoint();
    let mut gram = &hh * h;
    for i in 0..gram.nrows() {
        gram[(i, i)] += Complex64::new(sigma0_sq, 0.0);
    }
    let rhs = hh * DVector::from_column_slice(y);
    let chol = gram.cholesky().ok_or_else(|| Error::invalid("channel", "regularized Gram matrix is not positive definite"))?;
    Ok(chol.solve(&rhs))
}

/// Zero-forcing detector: quantized pseudo-inverse solution.
pub fn detect_zf(y: &[Complex64], h: &DMatrix<Complex64>, c: &Constellation) -> Result<Vec<Complex64>> {
    c.quantize_all(zf_estimate(y, h)?.as_slice())
}

/// Linear MMSE detector for unit-power symbols.
pub fn detect_mmse(
    y: &[Complex64],
    h: &DMatrix<Complex64>,
    sigma0_sq: f64,
    c: &Constellation,
) -> Result<Vec<Complex64>> {
    c.quantize_all(mmse_estimate(y, h, sigma0_sq)?.as_slice())
}

/// Checks that an exhaustive search over `order^users` candidates is allowed.
pub fn ml_tractable(order: usize, users: usize) -> Result<()> {
    let too_large = Error::SearchSpaceTooLarge { order, users };
    let users_u32 = u32::try_from(users).map_err(|_| too_large.clone())?;
    match (order as u64).checked_pow(users_u32) {
        Some(n) if n <= ML_MAX_CANDIDATES => Ok(()),
        _ => Err(too_large),
    }
}

/// Exhaustive maximum-likelihood detector. Candidates are visited in
/// lexicographic canonical order (first user most significant); the first
/// minimum wins ties.
pub fn detect_ml(y: &[Complex64], h: &DMatrix<Complex64>, c: &Constellation) -> Result<Vec<Complex64>> {
    check_dims(y, h)?;
    let (nr, nu) = h.shape();
    ml_tractable(c.order(), nu)?;
    let k = c.order();
    // products[j][s] = column j of H times symbol s
    let products: Vec<Vec<Vec<Complex64>>> = (0..nu)
        .map(|j| {
            c.points()
                .iter()
                .map(|&s| (0..nr).map(|i| h[(i, j)] * s).collect())
                .collect()
        })
        .collect();

    let mut digits = vec![0usize; nu];
    let mut best = digits.clone();
    let mut best_cost = f64::INFINITY;
    let mut r = vec![Complex64::new(0.0, 0.0); nr];
    loop {
        r.copy_from_slice(y);
        for (j, &d) in digits.iter().enumerate() {
            for (ri, p) in r.iter_mut().zip(&products[j][d]) {
                *ri -= p;
            }
        }
        let cost: f64 = r.iter().map(|v| v.norm_sqr()).sum();
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&digits);
        }
        // odometer, last user fastest
        let mut pos = nu;
        loop {
            if pos == 0 {
                return Ok(best.iter().map(|&d| c.points()[d]).collect());
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < k {
                break;
            }
            digits[pos] = 0;
        }
    }
}
