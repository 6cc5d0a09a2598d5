//! Kronecker-correlated Rayleigh channels, complex Gaussian noise, and the
//! stacked real-valued model the sampler works in.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Antenna counts and correlation coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub n_rx: usize,
    pub n_users: usize,
    pub rho: f64,
}

impl ChannelParams {
    pub fn new(n_rx: usize, n_users: usize, rho: f64) -> Result<Self> {
        let p = Self { n_rx, n_users, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 {
            return Err(Error::invalid("n_rx", "must be at least 1"));
        }
        if self.n_users == 0 {
            return Err(Error::invalid("n_users", "must be at least 1"));
        }
        check_rho(self.rho)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid("rho", format!("{rho} is outside [0, 1)")));
    }
    Ok(())
}

/// Exponential correlation matrix with entries `rho^|i-j|`.
pub fn exp_corr_matrix(n: usize, rho: f64) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    Ok(DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32)))
}

/// Symmetric PSD square root; negative eigenvalues from roundoff are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&roots) * q.transpose()
}

/// Draws Kronecker channels `R_r^{1/2} H_e R_u^{1/2}` with the square roots
/// computed once.
#[derive(Debug, Clone)]
pub struct KroneckerSampler {
    params: ChannelParams,
    rx_sqrt: DMatrix<Complex64>,
    tx_sqrt: DMatrix<Complex64>,
}

impl KroneckerSampler {
    pub fn new(params: ChannelParams) -> Result<Self> {
        params.validate()?;
        let to_complex = |m: DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
        Ok(Self {
            params,
            rx_sqrt: to_complex(psd_sqrt(&exp_corr_matrix(params.n_rx, params.rho)?)),
            tx_sqrt: to_complex(psd_sqrt(&exp_corr_matrix(params.n_users, params.rho)?)),
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// `H_e` has i.i.d. CN(0, 1/N_r) entries, so that E|h_ij|^2 = 1/N_r and
    /// the SNR definition `N_u / (sigma0^2 N_r)` is exact.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<Complex64> {
        let (nr, nu) = (self.params.n_rx, self.params.n_users);
        let std = (0.5 / nr as f64).sqrt();
        let he = DMatrix::from_fn(nr, nu, |_, _| complex_normal(rng, std));
        if self.params.rho == 0.0 {
            return he;
        }
        &self.rx_sqrt * he * &self.tx_sqrt
    }
}

/// One Kronecker channel draw.
pub fn sample_kronecker<R: Rng + ?Sized>(params: ChannelParams, rng: &mut R) -> Result<DMatrix<Complex64>> {
    Ok(KroneckerSampler::new(params)?.sample(rng))
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std, im * std)
}

/// Complex noise variance for a given SNR in dB: `N_u / (10^(snr/10) N_r)`.
pub fn sigma0_sq_from_snr(snr_db: f64, params: &ChannelParams) -> f64 {
    params.n_users as f64 / (10f64.powf(snr_db / 10.0) * params.n_rx as f64)
}

/// Circular complex Gaussian noise, `sigma0_sq` per entry.
pub fn sample_noise<R: Rng + ?Sized>(n_rx: usize, sigma0_sq: f64, rng: &mut R) -> Result<DVector<Complex64>> {
    if !(sigma0_sq > 0.0) || !sigma0_sq.is_finite() {
        return Err(Error::invalid("sigma0_sq", format!("{sigma0_sq} must be positive and finite")));
    }
    let std = (0.5 * sigma0_sq).sqrt();
    Ok(DVector::from_fn(n_rx, |_, _| complex_normal(rng, std)))
}

/// Stacked real form `[[Re H, -Im H], [Im H, Re H]]`.
pub fn real_matrix(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = h.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = h[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `[Re v; Im v]`.
pub fn real_vector(v: &[Complex64]) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`real_vector`].
pub fn complex_vector(v: &[f64]) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[i + n])).collect()
}

/// Real-equivalent system `y_r = H_r x_r + z_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealModel {
    pub h: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x: Option<DVector<f64>>,
}

pub fn to_real_model(
    h: &DMatrix<Complex64>,
    y: &[Complex64],
    x: Option<&[Complex64]>,
) -> Result<RealModel> {
    if y.len() != h.nrows() {
        return Err(Error::LengthMismatch {
            what: "received vector vs channel rows",
            left: y.len(),
            right: h.nrows(),
        });
    }
    if let Some(x) = x {
        if x.len() != h.ncols() {
            return Err(Error::LengthMismatch {
                what: "symbol vector vs channel columns",
                left: x.len(),
                right: h.ncols(),
            });
        }
    }
    Ok(RealModel {
        h: real_matrix(h),
        y: real_vector(y),
        x: x.map(real_vector),
    })
}

/// Channel matrix with the SVD of its real-equivalent form.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h_complex: DMatrix<Complex64>,
    pub h_real: DMatrix<f64>,
    /// `2N_r x 2N_r`, orthogonal.
    pub svd_u: DMatrix<f64>,
    /// `2N_u x 2N_u`, orthogonal.
    pub svd_v: DMatrix<f64>,
    /// Length `2N_u`, descending; zero-padded when `N_u > N_r`.
    pub singular_values: DVector<f64>,
    pub sigma0_sq: f64,
}

impl ChannelRealization {
    pub fn n_rx(&self) -> usize {
        self.h_complex.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h_complex.ncols()
    }

    /// `eta = U^T y_r`.
    pub fn spectral_observation(&self, y_real: &DVector<f64>) -> DVector<f64> {
        self.svd_u.tr_mul(y_real)
    }

    /// `U Sigma V^T`, for checking the decomposition.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (m, n) = self.h_real.shape();
        let mut sigma = DMatrix::zeros(m, n);
        for j in 0..m.min(n) {
            sigma[(j, j)] = self.singular_values[j];
        }
        &self.svd_u * sigma * self.svd_v.transpose()
    }
}

pub fn precompute_spectral(h: &DMatrix<Complex64>, sigma0_sq: f64) -> Result<ChannelRealization> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("channel matrix"));
    }
    if h.is_empty() {
        return Err(Error::Empty("channel matrix"));
    }
    if !(sigma0_sq > 0.0) || !sigma0_sq.is_finite() {
        return Err(Error::invalid("sigma0_sq", format!("{sigma0_sq} must be positive and finite")));
    }
    let h_real = real_matrix(h);
    let (m, n) = h_real.shape();
    let svd = SVD::try_new(h_real.clone(), true, true, 1e-15, 0).ok_or(Error::SvdFailed)?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::SvdFailed),
    };
    let rank = svd.singular_values.len();

    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let u_thin = DMatrix::from_fn(m, rank, |i, k| u[(i, order[k])]);
    let v_thin = DMatrix::from_fn(n, rank, |i, k| v_t[(order[k], i)]);
    let singular_values = DVector::from_fn(n, |j, _| if j < rank { svd.singular_values[order[j]].max(0.0) } else { 0.0 });

    Ok(ChannelRealization {
        h_complex: h.clone(),
        h_real,
        svd_u: complete_orthonormal(&u_thin),
        svd_v: complete_orthonormal(&v_thin),
        singular_values,
        sigma0_sq,
    })
}

/// Extends orthonormal columns to a full orthonormal basis using the
/// eigenvectors of the complementary projector `I - Q Q^T`.
fn complete_orthonormal(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, r) = q.shape();
    if r == m {
        return q.clone();
    }
    let projector = DMatrix::<f64>::identity(m, m) - q * q.transpose();
    let eig = SymmetricEigen::new(projector);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    cols.extend(order[..m - r].iter().map(|&k| eig.eigenvectors.column(k).into_owned()));
    DMatrix::from_columns(&cols)
}
