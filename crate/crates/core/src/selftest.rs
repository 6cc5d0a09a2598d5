//! Quick invariant checks that can be run from an installed binary.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::baselines::{detect_ml, detect_mmse, detect_zf, residual};
use crate::channel::{precompute_spectral, sample_kronecker, sample_noise, ChannelParams};
use crate::constellation::Constellation;
use crate::detector::{detect, step_size_diag, step_size_high, step_size_low, LangevinConfig};
use crate::rng::substream;
use crate::score::{effective_variance, likelihood_score, prior_score, SpectralState};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = Result<String, String>;

/// Runs every check with randomness derived from `seed`.
pub fn run(seed: u64) -> Vec<Check> {
    let checks: [(&'static str, fn(u64) -> Outcome); 9] = [
        ("constellation unit power", unit_power),
        ("separable quantization", separable_quantization),
        ("spectral reconstruction", spectral_reconstruction),
        ("likelihood score gradient", likelihood_gradient),
        ("prior score gradient", prior_gradient),
        ("step size boundary", step_boundary),
        ("orthogonal map norm", orthogonal_norm),
        ("ML residual optimality", ml_optimality),
        ("detector determinism", determinism),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, &(name, f))| {
            let (passed, detail) = match f(seed.wrapping_add(i as u64)) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            Check { name, passed, detail }
        })
        .collect()
}

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit_power(_: u64) -> Outcome {
    let mut worst = 0.0f64;
    for k in [4, 16, 64, 256] {
        let c = Constellation::qam(k).map_err(|e| e.to_string())?;
        worst = worst.max((c.average_power() - 1.0).abs());
    }
    ensure(worst <= 1e-12, format!("max |power - 1| = {worst:.3e}"))
}

fn separable_quantization(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    for k in [4, 16, 64] {
        let c = Constellation::qam(k).map_err(|e| e.to_string())?;
        for _ in 0..500 {
            let p = Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let fast = c.quantize(p).map_err(|e| e.to_string())?;
            let best = c
                .points()
                .iter()
                .copied()
                .min_by(|a, b| (a - p).norm_sqr().total_cmp(&(b - p).norm_sqr()))
                .expect("nonempty");
            if (fast - p).norm_sqr() != (best - p).norm_sqr() {
                return Err(format!("{k}-QAM disagrees at {p}"));
            }
        }
    }
    Ok("1500 random points".into())
}

fn spectral_reconstruction(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    let h = sample_kronecker(ChannelParams::new(8, 4, 0.5).unwrap(), &mut rng).map_err(|e| e.to_string())?;
    let chan = precompute_spectral(&h, 0.1).map_err(|e| e.to_string())?;
    let err = (chan.reconstruct() - &chan.h_real).amax();
    let eye_u = (chan.svd_u.tr_mul(&chan.svd_u) - DMatrix::identity(16, 16)).amax();
    let eye_v = (chan.svd_v.tr_mul(&chan.svd_v) - DMatrix::identity(8, 8)).amax();
    let worst = err.max(eye_u).max(eye_v);
    ensure(worst < 1e-10, format!("max deviation {worst:.3e}"))
}

fn likelihood_gradient(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let h = sample_kronecker(ChannelParams::new(3, 2, 0.3).unwrap(), &mut rng).map_err(|e| e.to_string())?;
        let sigma0_sq: f64 = rng.random_range(0.01..1.0);
        let sigma_l: f64 = rng.random_range(0.01..1.0);
        let chan = precompute_spectral(&h, sigma0_sq).map_err(|e| e.to_string())?;
        let chi = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let eta = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let s = chan.singular_values.clone();
        let log_lik = |chi: &DVector<f64>| -> f64 {
            (0..4)
                .map(|j| {
                    let d = (sigma0_sq - sigma_l * sigma_l * s[j] * s[j]).abs();
                    -(eta[j] - s[j] * chi[j]).powi(2) / d
                })
                .sum()
        };
        let state = SpectralState {
            chi: chi.clone(),
            eta: eta.clone(),
            level_index: 1,
        };
        let g = likelihood_score(&state, &chan, sigma_l);
        worst = worst.max(relative_gap(&g, &central_difference(&chi, 1e-6, log_lik)));
    }
    ensure(worst < 1e-5, format!("max relative error {worst:.3e}"))
}

fn prior_gradient(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    let c = Constellation::qam(16).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let sigma_l: f64 = rng.random_range(0.05..1.0);
        let var = effective_variance(sigma_l);
        let x = DVector::from_fn(4, |_, _| rng.random_range(-1.2..1.2));
        let log_prior = |x: &DVector<f64>| -> f64 {
            x.iter()
                .map(|&xi| {
                    let e: Vec<f64> = c.pam_levels().iter().map(|a| -(xi - a).powi(2) / (2.0 * var)).collect();
                    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    m + e.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
                })
                .sum()
        };
        let g = DVector::from_vec(prior_score(x.as_slice(), sigma_l, &c));
        worst = worst.max(relative_gap(&g, &central_difference(&x, 1e-3 * var.sqrt(), log_prior)));
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.3e}"))
}

fn step_boundary(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    for _ in 0..1000 {
        let sigma_l: f64 = rng.random_range(0.01..1.0);
        let s: f64 = rng.random_range(0.1..3.0);
        let sigma0 = sigma_l * s;
        if step_size_low(sigma_l, s, sigma0, 3e-5, 0.01) != 0.0 || step_size_high(sigma_l, s, sigma0, 3e-5, 0.01) != 0.0 {
            return Err(format!("nonzero at sigma_l = {sigma_l}, s = {s}"));
        }
        let sv: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..4.0)).collect();
        let sigma0: f64 = rng.random_range(0.01..2.0);
        if step_size_diag(sigma_l, &sv, sigma0, 3e-5, 0.01).iter().any(|&a| !(a >= 0.0)) {
            return Err(format!("negative step at sigma_l = {sigma_l}, sigma0 = {sigma0}"));
        }
    }
    Ok("1000 boundary points, 8000 grid points".into())
}

fn orthogonal_norm(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    let c = Constellation::qam(16).unwrap();
    let h = sample_kronecker(ChannelParams::new(6, 3, 0.6).unwrap(), &mut rng).map_err(|e| e.to_string())?;
    let chan = precompute_spectral(&h, 0.1).map_err(|e| e.to_string())?;
    let chi = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let x = &chan.svd_v * &chi;
    let g = DVector::from_vec(prior_score(x.as_slice(), 0.3, &c));
    let rotated = chan.svd_v.tr_mul(&g);
    let gap = (rotated.norm() - g.norm()).abs() / g.norm();
    ensure(gap < 1e-12, format!("relative norm gap {gap:.3e}"))
}

fn ml_optimality(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    let c = Constellation::qam(4).unwrap();
    let params = ChannelParams::new(4, 2, 0.0).unwrap();
    let config = LangevinConfig::with_shape(10, 50, 4).map_err(|e| e.to_string())?;
    for trial in 0..10 {
        let h = sample_kronecker(params, &mut rng).map_err(|e| e.to_string())?;
        let x: Vec<Complex64> = (0..2).map(|_| c.points()[rng.random_range(0..4)]).collect();
        let z = sample_noise(4, 0.3, &mut rng).map_err(|e| e.to_string())?;
        let y: Vec<Complex64> = (&h * DVector::from_vec(x) + z).iter().copied().collect();
        let ml = residual(&y, &h, &detect_ml(&y, &h, &c).map_err(|e| e.to_string())?);
        let others = [
            detect_zf(&y, &h, &c).map_err(|e| e.to_string())?,
            detect_mmse(&y, &h, 0.3, &c).map_err(|e| e.to_string())?,
            detect(&y, &h, 0.3, &config, &c).map_err(|e| e.to_string())?.symbols,
        ];
        if others.iter().any(|s| residual(&y, &h, s) < ml) {
            return Err(format!("a detector beat ML on trial {trial}"));
        }
    }
    Ok("10 trials".into())
}

fn determinism(seed: u64) -> Outcome {
    let mut rng = substream(seed, 0);
    let c = Constellation::qam(16).unwrap();
    let h = sample_kronecker(ChannelParams::new(4, 2, 0.0).unwrap(), &mut rng).map_err(|e| e.to_string())?;
    let y: Vec<Complex64> = (0..4).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    let config = LangevinConfig {
        seed,
        ..LangevinConfig::with_shape(5, 20, 3).map_err(|e| e.to_string())?
    };
    let a = detect(&y, &h, 0.1, &config, &c).map_err(|e| e.to_string())?;
    let b = detect(&y, &h, 0.1, &config, &c).map_err(|e| e.to_string())?;
    ensure(a == b, "two runs with one seed".into())
}

fn central_difference(x: &DVector<f64>, h: f64, f: impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |j, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

fn relative_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
