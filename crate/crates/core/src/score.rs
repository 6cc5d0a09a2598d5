//! Score functions of the annealed posterior, evaluated in the spectral
//! domain of the real-equivalent channel.
//!
//! Noise levels `sigma0` and `sigma_l` follow the complex convention
//! (CN(0, sigma^2) per entry). Each real dimension therefore carries half
//! the variance: the likelihood covariance diagonal is
//! `|sigma0^2 - sigma_l^2 s_j^2| / 2` and the prior smoothing variance is
//! `sigma_l^2 / 2`. Branch tests compare `sigma0` against `sigma_l s_j`
//! directly, where the factor of one half cancels.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelRealization;
use crate::constellation::Constellation;

/// Spectral iterate `chi = V^T x~` and observation `eta = U^T y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub chi: DVector<f64>,
    pub eta: DVector<f64>,
    /// 1-based annealing level.
    pub level_index: usize,
}

/// Which terms of the posterior score are kept for one spectral entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `sigma0 >= sigma_l s_j`, `s_j > 0`.
    LikelihoodAndPrior,
    /// `sigma0 < sigma_l s_j`.
    LikelihoodOnly,
    /// `s_j = 0`.
    PriorOnly,
}

impl Branch {
    pub fn select(sigma0: f64, sigma_l: f64, s: f64) -> Self {
        if s == 0.0 {
            Branch::PriorOnly
        } else if sigma0 < sigma_l * s {
            Branch::LikelihoodOnly
        } else {
            Branch::LikelihoodAndPrior
        }
    }

    pub fn uses_prior(self) -> bool {
        !matches!(self, Branch::LikelihoodOnly)
    }
}

/// Relative threshold below which `|sigma0^2 - sigma_l^2 s_j^2|` is treated
/// as zero by the pseudo-inverse.
pub const PINV_RTOL: f64 = 1e-12;

/// Per-dimension prior smoothing variance for complex noise level `sigma_l`.
pub fn effective_variance(sigma_l: f64) -> f64 {
    0.5 * sigma_l * sigma_l
}

/// Diagonal of `Sigma^T |sigma0^2 I - sigma_l^2 Sigma Sigma^T|^+` scaled to
/// real-dimension variances, so the likelihood score of entry `j` is
/// `coef_j * (eta_j - s_j chi_j)`.
pub fn likelihood_coefficients(singular_values: &[f64], sigma0_sq: f64, sigma_l: f64) -> Vec<f64> {
    let tol = PINV_RTOL * sigma0_sq;
    let sl2 = sigma_l * sigma_l;
    singular_values
        .iter()
        .map(|&s| {
            let d = (sigma0_sq - sl2 * s * s).abs();
            if d > tol {
                2.0 * s / d
            } else {
                0.0
            }
        })
        .collect()
}

/// Likelihood score with respect to `chi`.
pub fn likelihood_score(state: &SpectralState, chan: &ChannelRealization, sigma_l: f64) -> DVector<f64> {
    let s = chan.singular_values.as_slice();
    let coef = likelihood_coefficients(s, chan.sigma0_sq, sigma_l);
    DVector::from_fn(s.len(), |j, _| {
        if j < state.eta.len() {
            coef[j] * (state.eta[j] - s[j] * state.chi[j])
        } else {
            0.0
        }
    })
}

/// Elementwise MMSE denoiser for a uniformly spaced PAM alphabet that is
/// symmetric about zero.
///
/// Mixture weights are taken relative to the level nearest to `x`, so every
/// weight is at most one and nothing overflows. Consecutive weight ratios
/// form a geometric sequence (`w_{k+1} / w_k` shrinks by `exp(-gap^2 / var)`
/// per step), which needs only two `exp` calls per scalar.
#[derive(Debug, Clone)]
pub struct PamDenoiser<'a> {
    levels: &'a [f64],
    gap: f64,
    inv_var: f64,
    /// `exp(-gap^2 / var)`
    decay: f64,
}

impl<'a> PamDenoiser<'a> {
    /// `var` is the per-dimension smoothing variance.
    pub fn new(levels: &'a [f64], var: f64) -> Self {
        let gap = if levels.len() > 1 { levels[1] - levels[0] } else { 1.0 };
        Self {
            levels,
            gap,
            inv_var: 1.0 / var,
            decay: (-gap * gap / var).exp(),
        }
    }

    /// Posterior mean `E[x | x + n = value]`.
    #[inline]
    pub fn denoise(&self, value: f64) -> f64 {
        // The posterior mean is odd in `value`; work on |value| and restore the sign.
        if value == 0.0 {
            return 0.0;
        }
        let x = value.abs();
        let levels = self.levels;
        let m = levels.len();
        // x >= 0 > levels[0], so the cast rounds half up and saturates.
        let k = (((x - levels[0]) / self.gap + 0.5) as usize).min(m - 1);

        let mut num = levels[k];
        let mut den = 1.0;

        // w_{k+1} / w_k = exp(gap (x - a_k - gap / 2) / var) and
        // w_{k-1} / w_k = decay / (w_{k+1} / w_k).
        let up = exp_or_zero(self.gap * (x - levels[k] - 0.5 * self.gap) * self.inv_var);
        let down = if self.decay > 0.0 && up > 1e-200 {
            self.decay / up
        } else {
            exp_or_zero(-self.gap * (x - levels[k] + 0.5 * self.gap) * self.inv_var)
        };
        let mut ratio = up;
        let mut w = 1.0;
        for &a in &levels[k + 1..] {
            w *= ratio;
            if w == 0.0 {
                break;
            }
            num += a * w;
            den += w;
            ratio *= self.decay;
        }
        let mut ratio = down;
        let mut w = 1.0;
        for &a in levels[..k].iter().rev() {
            w *= ratio;
            if w == 0.0 {
                break;
            }
            num += a * w;
            den += w;
            ratio *= self.decay;
        }
        (num / den).copysign(value)
    }

    /// Tweedie score `(E[x | value] - value) / var`.
    #[inline]
    pub fn score(&self, value: f64) -> f64 {
        (self.denoise(value) - value) * self.inv_var
    }
}

#[inline]
fn exp_or_zero(a: f64) -> f64 {
    if a < -745.0 {
        0.0
    } else {
        a.exp()
    }
}

/// `out = A c` for a column-major `A` with `out.len()` rows.
fn mat_vec(a: &[f64], c: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the required CPU feature was detected above.
        unsafe { mat_vec_avx(a, c, out) };
        return;
    }
    mat_vec_body(a, c, out);
}

// Same operation order as the portable path, so results are bit-identical.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn mat_vec_avx(a: &[f64], c: &[f64], out: &mut [f64]) {
    mat_vec_body(a, c, out);
}

#[inline(always)]
fn mat_vec_body(a: &[f64], c: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    let mut cols = a.chunks_exact(n).zip(c);
    loop {
        match (cols.next(), cols.next(), cols.next(), cols.next()) {
            (Some((a0, &c0)), Some((a1, &c1)), Some((a2, &c2)), Some((a3, &c3))) => {
                for i in 0..n {
                    out[i] += (a0[i] * c0 + a1[i] * c1) + (a2[i] * c2 + a3[i] * c3);
                }
            }
            rest => {
                for (col, &ci) in [rest.0, rest.1, rest.2].into_iter().flatten() {
                    for (o, &v) in out.iter_mut().zip(col) {
                        *o += v * ci;
                    }
                }
                break;
            }
        }
    }
}

/// Elementwise MMSE denoiser over the per-dimension PAM alphabet.
pub fn prior_denoiser(x_tilde: &[f64], sigma_l: f64, c: &Constellation) -> Vec<f64> {
    let d = PamDenoiser::new(c.pam_levels(), effective_variance(sigma_l));
    x_tilde.iter().map(|&x| d.denoise(x)).collect()
}

/// Score of the Gaussian-smoothed prior, via Tweedie's identity.
pub fn prior_score(x_tilde: &[f64], sigma_l: f64, c: &Constellation) -> Vec<f64> {
    let d = PamDenoiser::new(c.pam_levels(), effective_variance(sigma_l));
    x_tilde.iter().map(|&x| d.score(x)).collect()
}

/// Precomputed per-level quantities for repeated posterior-score evaluation.
#[derive(Debug, Clone)]
pub(crate) struct LevelScore {
    pub(crate) lik_coef: Vec<f64>,
    pub(crate) use_prior: Vec<bool>,
    pub(crate) any_prior: bool,
    var: f64,
    v_tr: DMatrix<f64>,
}

impl LevelScore {
    pub(crate) fn new(chan: &ChannelRealization, sigma_l: f64) -> Self {
        let s = chan.singular_values.as_slice();
        let sigma0 = chan.sigma0_sq.sqrt();
        let mut lik_coef = likelihood_coefficients(s, chan.sigma0_sq, sigma_l);
        let branches: Vec<Branch> = s.iter().map(|&sj| Branch::select(sigma0, sigma_l, sj)).collect();
        for (c, b) in lik_coef.iter_mut().zip(&branches) {
            if *b == Branch::PriorOnly {
                *c = 0.0;
            }
        }
        let use_prior: Vec<bool> = branches.iter().map(|b| b.uses_prior()).collect();
        Self {
            any_prior: use_prior.iter().any(|&u| u),
            lik_coef,
            use_prior,
            var: effective_variance(sigma_l),
            v_tr: chan.svd_v.transpose(),
        }
    }

    /// Writes the posterior score into `out`. `x_buf` and `g_buf` are
    /// scratch space of length `2N_u`.
    pub(crate) fn evaluate(
        &self,
        chi: &DVector<f64>,
        eta: &DVector<f64>,
        chan: &ChannelRealization,
        levels: &[f64],
        x_buf: &mut DVector<f64>,
        g_buf: &mut DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        let s = chan.singular_values.as_slice();
        let n_eta = eta.len();
        for j in 0..out.len() {
            out[j] = if j < n_eta {
                self.lik_coef[j] * (eta[j] - s[j] * chi[j])
            } else {
                0.0
            };
        }
        if !self.any_prior {
            return;
        }
        let denoiser = PamDenoiser::new(levels, self.var);
        mat_vec(chan.svd_v.as_slice(), chi.as_slice(), x_buf.as_mut_slice());
        for x in x_buf.iter_mut() {
            *x = denoiser.score(*x);
        }
        mat_vec(self.v_tr.as_slice(), x_buf.as_slice(), g_buf.as_mut_slice());
        for ((o, &g), &u) in out.iter_mut().zip(g_buf.iter()).zip(&self.use_prior) {
            if u {
                *o += g;
            }
        }
    }
}

/// Piecewise posterior score: likelihood, prior mapped through `V^T`, or
/// both, per spectral entry.
pub fn posterior_score(
    state: &SpectralState,
    chan: &ChannelRealization,
    sigma_l: f64,
    c: &Constellation,
) -> DVector<f64> {
    let n = chan.singular_values.len();
    let level = LevelScore::new(chan, sigma_l);
    let mut x_buf = DVector::zeros(n);
    let mut g_buf = DVector::zeros(n);
    let mut out = DVector::zeros(n);
    level.evaluate(
        &state.chi,
        &state.eta,
        chan,
        c.pam_levels(),
        &mut x_buf,
        &mut g_buf,
        &mut out,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{precompute_spectral, sample_kronecker, ChannelParams};
    use crate::rng::seeded;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use rand::Rng;

    fn qam(order: usize) -> Constellation {
        Constellation::qam(order).unwrap()
    }

    /// Gaussian-mixture log density of one dimension (unnormalized).
    fn mixture_log_density(x: f64, levels: &[f64], var: f64) -> f64 {
        let e: Vec<f64> = levels.iter().map(|a| -(x - a).powi(2) / (2.0 * var)).collect();
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + e.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - (levels.len() as f64).ln()
    }

    fn random_channel(seed: u64, nr: usize, nu: usize, sigma0_sq: f64) -> ChannelRealization {
        let mut rng = seeded(seed);
        let h = sample_kronecker(ChannelParams::new(nr, nu, 0.3).unwrap(), &mut rng).unwrap();
        precompute_spectral(&h, sigma0_sq).unwrap()
    }

    /// Identity channel with custom singular values on the diagonal.
    fn diagonal_channel(s: &[f64], sigma0_sq: f64) -> ChannelRealization {
        let n = s.len();
        ChannelRealization {
            h_complex: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
            h_real: DMatrix::from_diagonal(&DVector::from_column_slice(s)),
            svd_u: DMatrix::identity(n, n),
            svd_v: DMatrix::identity(n, n),
            singular_values: DVector::from_column_slice(s),
            sigma0_sq,
        }
    }

    #[test]
    fn likelihood_reduces_to_gaussian_score() {
        let chan = diagonal_channel(&[1.0, 1.0, 1.0, 1.0], 0.2);
        let state = SpectralState {
            chi: DVector::from_vec(vec![0.1, -0.4, 0.3, 0.0]),
            eta: DVector::from_vec(vec![0.5, 0.5, -0.2, 1.0]),
            level_index: 1,
        };
        let g = likelihood_score(&state, &chan, 1e-9);
        for j in 0..4 {
            // real-dimension noise variance sigma0^2 / 2
            let expected = (state.eta[j] - state.chi[j]) / (0.5 * 0.2);
            assert!((g[j] - expected).abs() < 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn zero_singular_value_kills_likelihood() {
        let chan = diagonal_channel(&[1.5, 0.0], 0.1);
        let state = SpectralState {
            chi: DVector::from_vec(vec![0.2, 0.7]),
            eta: DVector::from_vec(vec![1.0, 3.0]),
            level_index: 1,
        };
        assert_eq!(likelihood_score(&state, &chan, 0.5)[1], 0.0);
    }

    #[test]
    fn likelihood_matches_finite_differences() {
        let chan = random_channel(11, 2, 2, 0.08);
        let mut rng = seeded(12);
        for _ in 0..50 {
            let sigma_l = 10f64.powf(rng.random_range(-2.0..0.0));
            let chi = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let eta = DVector::from_fn(4, |_, _| rng.random_range(-1.5..1.5));
            let state = SpectralState { chi: chi.clone(), eta: eta.clone(), level_index: 1 };
            let g = likelihood_score(&state, &chan, sigma_l);
            let s = chan.singular_values.as_slice();
            let logp = |c: &DVector<f64>| -> f64 {
                (0..4)
                    .map(|j| {
                        let d = 0.5 * (chan.sigma0_sq - sigma_l * sigma_l * s[j] * s[j]).abs();
                        if d > 0.5 * PINV_RTOL * chan.sigma0_sq {
                            -(eta[j] - s[j] * c[j]).powi(2) / (2.0 * d)
                        } else {
                            0.0
                        }
                    })
                    .sum()
            };
            let h = 1e-6;
            let fd = DVector::from_fn(4, |k, _| {
                let mut p = chi.clone();
                let mut m = chi.clone();
                p[k] += h;
                m[k] -= h;
                (logp(&p) - logp(&m)) / (2.0 * h)
            });
            let rel = (&fd - &g).norm() / g.norm().max(1e-300);
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn likelihood_invariant_under_consistent_shift() {
        let chan = random_channel(13, 4, 2, 0.05);
        let mut rng = seeded(14);
        let s = &chan.singular_values;
        let chi = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let eta = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let delta = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let mut eta2 = eta.clone();
        for j in 0..4 {
            eta2[j] += s[j] * delta[j];
        }
        let a = likelihood_score(&SpectralState { chi: chi.clone(), eta, level_index: 1 }, &chan, 0.3);
        let b = likelihood_score(&SpectralState { chi: chi + delta, eta: eta2, level_index: 1 }, &chan, 0.3);
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn denoiser_examples() {
        let c = qam(16);
        for sigma in [0.01, 0.3, 2.0] {
            assert_eq!(prior_denoiser(&[0.0], sigma, &c)[0], 0.0);
        }
        assert!(prior_denoiser(&[0.4], 1e6, &c)[0].abs() < 1e-12);

        // Oracle: two-term mixture evaluated directly; weights differ by exp(-2*0.7*a/var).
        let q = qam(4);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let sigma_eff = 0.01;
        let wp = (-(0.70f64 - a).powi(2) / (2.0 * sigma_eff * sigma_eff)).exp();
        let wm = (-(0.70f64 + a).powi(2) / (2.0 * sigma_eff * sigma_eff)).exp();
        let direct = (a * wp - a * wm) / (wp + wm);
        let sigma_l = sigma_eff * 2f64.sqrt();
        let d = prior_denoiser(&[0.70], sigma_l, &q)[0];
        assert!((d - a).abs() < 1e-9);
        assert!((d - direct).abs() < 1e-12);
    }

    #[test]
    fn denoiser_no_overflow() {
        let c = qam(256);
        let sigma_l = 1e-4 * 2f64.sqrt();
        for x in [1e6, -1e6, 3.3, -0.0001] {
            let d = prior_denoiser(&[x], sigma_l, &c)[0];
            assert!(d.is_finite());
            assert!(prior_score(&[x], sigma_l, &c)[0].is_finite());
        }
        assert!((prior_denoiser(&[1e6], sigma_l, &c)[0] - c.pam_levels()[15]).abs() < 1e-12);
    }

    #[test]
    fn prior_score_examples() {
        let c = qam(16);
        assert_eq!(prior_score(&[0.0], 0.4, &c)[0], 0.0);
        let sigma_l = 0.01 * 2f64.sqrt();
        for &a in c.pam_levels() {
            let x = a + 0.001;
            let g = prior_score(&[x], sigma_l, &c)[0];
            assert_eq!(g.signum(), (a - x).signum());
        }
    }

    #[test]
    fn prior_score_matches_finite_differences() {
        let mut rng = seeded(15);
        for order in [4, 16, 64] {
            let c = qam(order);
            for sigma_eff in [0.1, 0.5] {
                let sigma_l = sigma_eff * 2f64.sqrt();
                for _ in 0..100 {
                    let x: f64 = rng.random_range(-1.5..1.5);
                    let g = prior_score(&[x], sigma_l, &c)[0];
                    let h = 1e-6;
                    let var = sigma_eff * sigma_eff;
                    let fd = (mixture_log_density(x + h, c.pam_levels(), var)
                        - mixture_log_density(x - h, c.pam_levels(), var))
                        / (2.0 * h);
                    assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-2), "x {x}: {fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn branch_partition() {
        assert_eq!(Branch::select(0.1, 1.0, 0.0), Branch::PriorOnly);
        assert_eq!(Branch::select(0.1, 1.0, 0.5), Branch::LikelihoodOnly);
        assert_eq!(Branch::select(0.1, 0.1, 0.5), Branch::LikelihoodAndPrior);
        // boundary sigma0 == sigma_l s_j takes the combined branch
        assert_eq!(Branch::select(0.5, 1.0, 0.5), Branch::LikelihoodAndPrior);
    }

    #[test]
    fn posterior_all_zero_singular_values_is_rotated_prior() {
        let mut chan = random_channel(16, 3, 2, 0.1);
        chan.singular_values.fill(0.0);
        let mut rng = seeded(17);
        let chi = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let state = SpectralState { chi: chi.clone(), eta: DVector::zeros(6), level_index: 1 };
        let c = qam(16);
        let out = posterior_score(&state, &chan, 0.3, &c);
        let x = &chan.svd_v * &chi;
        let p = DVector::from_vec(prior_score(x.as_slice(), 0.3, &c));
        let expected = chan.svd_v.transpose() * &p;
        assert!((out - &expected).norm() < 1e-10);
        // orthogonal map preserves the norm
        assert!((expected.norm() - p.norm()).abs() < 1e-10);
    }

    #[test]
    fn posterior_large_sigma_is_likelihood_only() {
        let chan = random_channel(18, 4, 2, 0.01);
        let mut rng = seeded(19);
        let state = SpectralState {
            chi: DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)),
            eta: DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0)),
            level_index: 1,
        };
        let sigma_l = 100.0;
        let out = posterior_score(&state, &chan, sigma_l, &qam(4));
        let lik = likelihood_score(&state, &chan, sigma_l);
        assert_eq!(out, lik);
    }

    #[test]
    fn posterior_boundary_takes_prior_only_value() {
        // s = 1, sigma0 = 0.5 = sigma_l * s: pseudo-inverse entry vanishes.
        let chan = diagonal_channel(&[1.0, 1.0], 0.25);
        let state = SpectralState {
            chi: DVector::from_vec(vec![0.3, -0.2]),
            eta: DVector::from_vec(vec![1.0, 1.0]),
            level_index: 1,
        };
        let c = qam(4);
        let out = posterior_score(&state, &chan, 0.5, &c);
        let p = prior_score(&[0.3, -0.2], 0.5, &c);
        assert!((out[0] - p[0]).abs() < 1e-12 && (out[1] - p[1]).abs() < 1e-12);
    }
}
