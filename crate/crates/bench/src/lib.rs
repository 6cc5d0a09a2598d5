//! Shared fixtures for the detector benchmarks.

use langevin_mimo::channel::{precompute_spectral, ChannelParams, ChannelRealization, KroneckerSampler};
use langevin_mimo::harness::{draw_trial, Trial};
use langevin_mimo::Constellation;

/// A correlated-channel trial plus its spectral decomposition.
pub struct Fixture {
    pub constellation: Constellation,
    pub trial: Trial,
    pub realization: ChannelRealization,
}

pub fn fixture(n_rx: usize, n_users: usize, order: usize, snr_db: f64, seed: u64) -> Fixture {
    let params = ChannelParams::new(n_rx, n_users, 0.6).expect("valid channel");
    let sampler = KroneckerSampler::new(params).expect("valid channel");
    let constellation = Constellation::qam(order).expect("square QAM");
    let trial = draw_trial(&sampler, &constellation, seed, snr_db, 0).expect("trial");
    let realization = precompute_spectral(&trial.h, trial.sigma0_sq).expect("SVD");
    Fixture {
        constellation,
        trial,
        realization,
    }
}
