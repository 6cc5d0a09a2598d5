//! Massive MIMO symbol detection by annealed Langevin dynamics.
//!
//! The detector samples from the posterior of the transmitted symbols given
//! the received vector and perfect channel knowledge. A sequence of
//! decreasing Gaussian perturbations turns the discrete constellation prior
//! into a smooth density whose score is available in closed form, so no
//! training is needed. Zero-forcing, MMSE and exhaustive ML detectors are
//! provided for comparison, and [`harness`] runs seeded Monte-Carlo symbol
//! error rate sweeps.

pub mod baselines;
pub mod channel;
pub mod constellation;
pub mod detector;
pub mod error;
pub mod harness;
pub mod rng;
pub mod score;
pub mod selftest;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub use baselines::{detect_ml, detect_mmse, detect_zf, residual};
pub use channel::{ChannelParams, ChannelRealization, KroneckerSampler};
pub use constellation::{count_symbol_errors, Constellation};
pub use detector::{detect, AnnealingSchedule, DetectionResult, LangevinConfig, StepRule};
pub use error::{Error, Result};
pub use harness::{DetectorKind, SerReport, SerRow, SweepConfig};
