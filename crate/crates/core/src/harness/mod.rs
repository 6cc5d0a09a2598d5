//! Seeded Monte-Carlo symbol error rate sweeps.
//!
//! For every SNR point and trial a fresh channel, symbol vector and noise
//! vector are drawn from a substream keyed by `(master_seed, snr, trial)`.
//! All configured detectors see the same `(y, H, sigma0^2)`, and counts are
//! reduced with integer sums, so the report does not depend on the number
//! of worker threads.

mod config;
mod report;

use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rayon::prelude::*;

pub use config::{parse_config, parse_detector_list, ConfigError, DetectorKind, SweepConfig};
pub use report::{emit_csv, format_sig, parse_csv, wilson_interval, ReportError, SerReport, SerRow, CSV_HEADER, Z_95};

use crate::baselines::{detect_ml, detect_mmse, detect_zf};
use crate::channel::{precompute_spectral, sample_noise, sigma0_sq_from_snr, KroneckerSampler};
use crate::constellation::{count_symbol_errors, Constellation};
use crate::detector::{detect_with_realization, LangevinConfig};
use crate::error::Result;
use crate::rng::{derive_seed, substream};

/// Fraction of excluded trials above which a sweep is flagged.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-3;

/// One received vector together with everything needed to detect it.
#[derive(Debug, Clone)]
pub struct Trial {
    pub h: nalgebra::DMatrix<Complex64>,
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub sigma0_sq: f64,
    /// Seed for the sampler's trajectory substreams.
    pub langevin_seed: u64,
}

/// Seed of the trial stream family for one SNR point. Keyed by the SNR value
/// so the same point yields the same trials in any sweep.
pub fn snr_seed(master_seed: u64, snr_db: f64) -> u64 {
    derive_seed(master_seed, snr_db.to_bits())
}

/// Draws trial `index` at `snr_db`.
pub fn draw_trial(
    sampler: &KroneckerSampler,
    c: &Constellation,
    master_seed: u64,
    snr_db: f64,
    index: u64,
) -> Result<Trial> {
    let params = *sampler.params();
    let mut rng = substream(snr_seed(master_seed, snr_db), index);
    let sigma0_sq = sigma0_sq_from_snr(snr_db, &params);
    let h = sampler.sample(&mut rng);
    let x: Vec<Complex64> = (0..params.n_users)
        .map(|_| c.points()[rng.random_range(0..c.order())])
        .collect();
    let z = sample_noise(params.n_rx, sigma0_sq, &mut rng)?;
    let y = (&h * DVector::from_column_slice(&x) + z).iter().copied().collect();
    let langevin_seed = rng.next_u64();
    Ok(Trial {
        h,
        x,
        y,
        sigma0_sq,
        langevin_seed,
    })
}

/// Runs `detector` on one trial.
pub fn run_detector(
    detector: DetectorKind,
    trial: &Trial,
    langevin: &LangevinConfig,
    c: &Constellation,
) -> Result<Vec<Complex64>> {
    match detector {
        DetectorKind::Zf => detect_zf(&trial.y, &trial.h, c),
        DetectorKind::Mmse => detect_mmse(&trial.y, &trial.h, trial.sigma0_sq, c),
        DetectorKind::Ml => detect_ml(&trial.y, &trial.h, c),
        DetectorKind::Langevin => {
            let chan = precompute_spectral(&trial.h, trial.sigma0_sq)?;
            let config = LangevinConfig {
                seed: trial.langevin_seed,
                ..langevin.clone()
            };
            Ok(detect_with_realization(&trial.y, &chan, &config, c)?.symbols)
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    errors: u64,
    symbols: u64,
    excluded: u64,
    seconds: f64,
}

fn merge(mut a: Vec<Tally>, b: Vec<Tally>) -> Vec<Tally> {
    for (x, y) in a.iter_mut().zip(b) {
        x.errors += y.errors;
        x.symbols += y.symbols;
        x.excluded += y.excluded;
        x.seconds += y.seconds;
    }
    a
}

/// Runs the sweep described by `config`. Rows come out detector-major with
/// SNR ascending. A detector failure excludes that trial from that
/// detector's counts only.
pub fn run_sweep(config: &SweepConfig) -> Result<SerReport> {
    let c = Constellation::qam(config.modulation_order)?;
    let sampler = KroneckerSampler::new(config.channel)?;
    let n_det = config.detectors.len();

    let mut snrs = config.snr_db_list.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();

    let mut per_snr = Vec::with_capacity(snrs.len());
    for &snr_db in &snrs {
        let tallies = (0..config.n_trials as u64)
            .into_par_iter()
            .map(|t| -> Result<Vec<Tally>> {
                let trial = draw_trial(&sampler, &c, config.master_seed, snr_db, t)?;
                let mut out = vec![Tally::default(); n_det];
                for (tally, &det) in out.iter_mut().zip(&config.detectors) {
                    let start = Instant::now();
                    let result = run_detector(det, &trial, &config.langevin, &c);
                    tally.seconds = start.elapsed().as_secs_f64();
                    match result.and_then(|est| count_symbol_errors(&est, &trial.x)) {
                        Ok((errors, total)) => {
                            tally.errors = errors as u64;
                            tally.symbols = total as u64;
                        }
                        Err(_) => tally.excluded = 1,
                    }
                }
                Ok(out)
            })
            .try_reduce(|| vec![Tally::default(); n_det], |a, b| Ok(merge(a, b)))?;
        per_snr.push(tallies);
    }

    let mut rows = Vec::with_capacity(n_det * snrs.len());
    for (d, det) in config.detectors.iter().enumerate() {
        for (s, &snr_db) in snrs.iter().enumerate() {
            let t = &per_snr[s][d];
            let mut row = SerRow::new(det.as_str(), snr_db, t.symbols, t.errors);
            row.n_excluded_trials = t.excluded;
            row.n_trials = config.n_trials as u64;
            row.wall_time_s = if config.record_wall_time { t.seconds } else { 0.0 };
            rows.push(row);
        }
    }
    Ok(SerReport { rows })
}
