//! Annealed Langevin detector.
//!
//! Each trajectory starts from a uniform draw in `[-1, 1]` in spectral
//! coordinates, runs `T` preconditioned Langevin steps at each of `L`
//! decreasing noise levels, and is quantized to the constellation after
//! mapping back through `V`. Out of `M` independent trajectories the
//! candidate with the smallest residual `||y - H x||^2` is returned.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::baselines::residual;
use crate::channel::{complex_vector, precompute_spectral, real_vector, ChannelRealization};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::score::LevelScore;

/// Iterates whose magnitude exceeds this are treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e3;

/// Strictly decreasing noise levels `sigma_1 > ... > sigma_L > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule {
    sigmas: Vec<f64>,
}

impl AnnealingSchedule {
    /// Geometric spacing between `sigma_first` and `sigma_last`, endpoints exact.
    pub fn geometric(sigma_first: f64, sigma_last: f64, n_levels: usize) -> Result<Self> {
        if !(sigma_last > 0.0) || !sigma_last.is_finite() {
            return Err(Error::invalid("sigma_last", format!("{sigma_last} must be positive")));
        }
        if !(sigma_first > sigma_last) || !sigma_first.is_finite() {
            return Err(Error::invalid(
                "sigma_first",
                format!("{sigma_first} must exceed sigma_last = {sigma_last}"),
            ));
        }
        if n_levels < 2 {
            return Err(Error::invalid("n_levels", format!("{n_levels} < 2")));
        }
        let ratio = sigma_last / sigma_first;
        let last = (n_levels - 1) as f64;
        let mut sigmas: Vec<f64> = (0..n_levels)
            .map(|l| sigma_first * ratio.powf(l as f64 / last))
            .collect();
        sigmas[0] = sigma_first;
        sigmas[n_levels - 1] = sigma_last;
        Ok(Self { sigmas })
    }

    /// Wraps explicit levels, checking they are strictly decreasing and positive.
    pub fn from_levels(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Empty("annealing schedule"));
        }
        if sigmas.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("sigmas", "levels must be strictly decreasing"));
        }
        if !(sigmas[sigmas.len() - 1] > 0.0) || sigmas.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("sigmas", "levels must be positive and finite"));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn last(&self) -> f64 {
        self.sigmas[self.sigmas.len() - 1]
    }
}

/// Geometric schedule; see [`AnnealingSchedule::geometric`].
pub fn make_schedule(sigma_first: f64, sigma_last: f64, n_levels: usize) -> Result<AnnealingSchedule> {
    AnnealingSchedule::geometric(sigma_first, sigma_last, n_levels)
}

/// How the level step size is normalized by the final noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// `eps sigma_l^2 / sigma_L`.
    #[default]
    SigmaLast,
    /// `eps sigma_l^2 / sigma_L^2`, the usual annealed Langevin scaling.
    SigmaLastSquared,
}

impl StepRule {
    pub fn as_str(self) -> &'static str {
        match self {
            StepRule::SigmaLast => "sigma_last",
            StepRule::SigmaLastSquared => "sigma_last_squared",
        }
    }

    /// `epsilon` rescaled so that [`step_size_diag`] implements this rule.
    pub fn effective_epsilon(self, epsilon: f64, sigma_last: f64) -> f64 {
        match self {
            StepRule::SigmaLast => epsilon,
            StepRule::SigmaLastSquared => epsilon / sigma_last,
        }
    }
}

impl std::str::FromStr for StepRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [StepRule::SigmaLast, StepRule::SigmaLastSquared]
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::invalid("step_rule", format!("unknown rule `{s}` (expected sigma_last or sigma_last_squared)")))
    }
}

/// Sampler hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LangevinConfig {
    pub epsilon: f64,
    pub steps_per_level: usize,
    pub schedule: AnnealingSchedule,
    pub n_trajectories: usize,
    pub step_rule: StepRule,
    pub seed: u64,
}

impl LangevinConfig {
    pub const DEFAULT_EPSILON: f64 = 3e-5;
    pub const DEFAULT_STEPS_PER_LEVEL: usize = 70;
    pub const DEFAULT_LEVELS: usize = 20;
    pub const DEFAULT_SIGMA_FIRST: f64 = 1.0;
    pub const DEFAULT_SIGMA_LAST: f64 = 0.01;
    pub const DEFAULT_TRAJECTORIES: usize = 40;

    /// Geometric schedule with the given shape and all other settings at defaults.
    pub fn with_shape(n_levels: usize, steps_per_level: usize, n_trajectories: usize) -> Result<Self> {
        Ok(Self {
            schedule: AnnealingSchedule::geometric(Self::DEFAULT_SIGMA_FIRST, Self::DEFAULT_SIGMA_LAST, n_levels)?,
            steps_per_level,
            n_trajectories,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon", format!("{} must be positive", self.epsilon)));
        }
        if self.steps_per_level == 0 {
            return Err(Error::invalid("steps_per_level", "must be at least 1"));
        }
        if self.n_trajectories == 0 {
            return Err(Error::invalid("n_trajectories", "must be at least 1"));
        }
        Ok(())
    }

    /// Total score evaluations per trajectory.
    pub fn iterations(&self) -> usize {
        self.schedule.len() * self.steps_per_level
    }
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            epsilon: Self::DEFAULT_EPSILON,
            steps_per_level: Self::DEFAULT_STEPS_PER_LEVEL,
            schedule: AnnealingSchedule::geometric(
                Self::DEFAULT_SIGMA_FIRST,
                Self::DEFAULT_SIGMA_LAST,
                Self::DEFAULT_LEVELS,
            )
            .expect("default schedule is valid"),
            n_trajectories: Self::DEFAULT_TRAJECTORIES,
            step_rule: StepRule::SigmaLast,
            seed: 0,
        }
    }
}

/// Step size where `sigma_l s <= sigma0`:
/// `eps sigma_l^2 / sigma_L (1 - sigma_l^2 s^2 / sigma0^2)`.
pub fn step_size_low(sigma_l: f64, s: f64, sigma0: f64, epsilon: f64, sigma_last: f64) -> f64 {
    let r = sigma_l * s / sigma0;
    epsilon * sigma_l * sigma_l / sigma_last * (1.0 - r * r)
}

/// Step size where `sigma_l s > sigma0`:
/// `eps / sigma_L (sigma_l^2 - sigma0^2 / s^2)`.
pub fn step_size_high(sigma_l: f64, s: f64, sigma0: f64, epsilon: f64, sigma_last: f64) -> f64 {
    let r = sigma0 / (sigma_l * s);
    epsilon / sigma_last * sigma_l * sigma_l * (1.0 - r * r)
}

/// Diagonal of the level-`l` step-size matrix.
pub fn step_size_diag(
    sigma_l: f64,
    singular_values: &[f64],
    sigma0: f64,
    epsilon: f64,
    sigma_last: f64,
) -> Vec<f64> {
    singular_values
        .iter()
        .map(|&s| {
            if sigma_l * s <= sigma0 {
                step_size_low(sigma_l, s, sigma0, epsilon, sigma_last)
            } else {
                step_size_high(sigma_l, s, sigma0, epsilon, sigma_last)
            }
        })
        .collect()
}

/// Runs one annealed trajectory and returns the final spectral iterate.
pub fn run_trajectory<R: Rng + ?Sized>(
    eta: &DVector<f64>,
    chan: &ChannelRealization,
    config: &LangevinConfig,
    c: &Constellation,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = chan.singular_values.len();
    if eta.len() != chan.svd_u.nrows() {
        return Err(Error::LengthMismatch {
            what: "spectral observation vs channel rows",
            left: eta.len(),
            right: chan.svd_u.nrows(),
        });
    }
    let sigma0 = chan.sigma0_sq.sqrt();
    let sigma_last = config.schedule.last();
    let epsilon = config.step_rule.effective_epsilon(config.epsilon, sigma_last);
    let levels = c.pam_levels();

    let mut chi = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let mut score = DVector::zeros(n);
    let mut x_buf = DVector::zeros(n);
    let mut g_buf = DVector::zeros(n);
    let mut noise = vec![0.0; n];

    for (l, &sigma_l) in config.schedule.sigmas().iter().enumerate() {
        let step = step_size_diag(sigma_l, chan.singular_values.as_slice(), sigma0, epsilon, sigma_last);
        let noise_scale: Vec<f64> = step.iter().map(|&a| (2.0 * a).sqrt()).collect();
        let level = LevelScore::new(chan, sigma_l);
        for t in 0..config.steps_per_level {
            for w in noise.iter_mut() {
                *w = rng.sample(StandardNormal);
            }
            level.evaluate(&chi, eta, chan, levels, &mut x_buf, &mut g_buf, &mut score);
            let mut ok = true;
            for j in 0..n {
                let v = chi[j] + step[j] * score[j] + noise_scale[j] * noise[j];
                ok &= v.abs() <= DIVERGENCE_BOUND;
                chi[j] = v;
            }
            if !ok {
                return Err(Error::Diverged { level: l + 1, step: t });
            }
        }
    }
    Ok(chi)
}

/// Output of [`detect`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub symbols: Vec<Complex64>,
    /// `||y - H x||^2` of the returned candidate.
    pub residual: f64,
    pub trajectory_index: usize,
    pub per_trajectory_residuals: Vec<f64>,
}

/// Stream for trajectory `m` under `seed`.
pub fn trajectory_stream(seed: u64, m: usize) -> Stream {
    substream(seed, m as u64)
}

/// Detects `x` from `y = H x + z` by running `M` annealed trajectories.
pub fn detect(
    y: &[Complex64],
    h: &DMatrix<Complex64>,
    sigma0_sq: f64,
    config: &LangevinConfig,
    c: &Constellation,
) -> Result<DetectionResult> {
    if y.len() != h.nrows() {
        return Err(Error::LengthMismatch {
            what: "received vector vs channel rows",
            left: y.len(),
            right: h.nrows(),
        });
    }
    let chan = precompute_spectral(h, sigma0_sq)?;
    detect_with_realization(y, &chan, config, c)
}

/// [`detect`] with the spectral decomposition already computed.
pub fn detect_with_realization(
    y: &[Complex64],
    chan: &ChannelRealization,
    config: &LangevinConfig,
    c: &Constellation,
) -> Result<DetectionResult> {
    config.validate()?;
    if y.len() != chan.n_rx() {
        return Err(Error::LengthMismatch {
            what: "received vector vs channel rows",
            left: y.len(),
            right: chan.n_rx(),
        });
    }
    let eta = chan.spectral_observation(&real_vector(y));
    let candidates: Vec<(Vec<Complex64>, f64)> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|m| {
            let mut rng = trajectory_stream(config.seed, m);
            let chi = run_trajectory(&eta, chan, config, c, &mut rng)?;
            let x = &chan.svd_v * chi;
            let symbols = c.quantize_all(&complex_vector(x.as_slice()))?;
            let r = residual(y, &chan.h_complex, &symbols);
            Ok((symbols, r))
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (m, cand) in candidates.iter().enumerate() {
        if cand.1 < candidates[best].1 {
            best = m;
        }
    }
    let per_trajectory_residuals = candidates.iter().map(|c| c.1).collect();
    let (symbols, residual) = candidates.into_iter().nth(best).expect("at least one trajectory");
    Ok(DetectionResult {
        symbols,
        residual,
        trajectory_index: best,
        per_trajectory_residuals,
    })
}
