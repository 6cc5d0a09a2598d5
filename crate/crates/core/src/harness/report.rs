//! Symbol error rate reports and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

pub const CSV_HEADER: &str = "detector,snr_db,n_symbols,n_symbol_errors,ser,ci_low,ci_high,wall_time_s";

/// One (detector, SNR) point.
#[derive(Debug, Clone, PartialEq)]
pub struct SerRow {
    pub detector: String,
    pub snr_db: f64,
    pub n_symbols: u64,
    pub n_symbol_errors: u64,
    pub ser: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub wall_time_s: f64,
    /// Trials dropped because the detector failed. Not part of the CSV.
    pub n_excluded_trials: u64,
    pub n_trials: u64,
}

impl SerRow {
    pub fn new(detector: impl Into<String>, snr_db: f64, n_symbols: u64, n_symbol_errors: u64) -> Self {
        let (ser, ci_low, ci_high) = if n_symbols == 0 {
            (0.0, 0.0, 1.0)
        } else {
            let (lo, hi) = wilson_interval(n_symbol_errors, n_symbols, Z_95);
            (n_symbol_errors as f64 / n_symbols as f64, lo, hi)
        };
        Self {
            detector: detector.into(),
            snr_db,
            n_symbols,
            n_symbol_errors,
            ser,
            ci_low,
            ci_high,
            wall_time_s: 0.0,
            n_excluded_trials: 0,
            n_trials: 0,
        }
    }

    /// True if the confidence intervals of `self` and `other` are disjoint.
    pub fn separated_from(&self, other: &SerRow) -> bool {
        self.ci_high < other.ci_low || other.ci_high < self.ci_low
    }
}

/// Rows ordered detector-major, SNR ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SerReport {
    pub rows: Vec<SerRow>,
}

impl SerReport {
    pub fn row(&self, detector: &str, snr_db: f64) -> Option<&SerRow> {
        self.rows.iter().find(|r| r.detector == detector && r.snr_db == snr_db)
    }

    /// Rows whose excluded-trial fraction exceeds `threshold`.
    pub fn excessive_exclusions(&self, threshold: f64) -> Vec<&SerRow> {
        self.rows
            .iter()
            .filter(|r| r.n_trials > 0 && r.n_excluded_trials as f64 / r.n_trials as f64 > threshold)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.detector,
                format_sig(r.snr_db),
                r.n_symbols,
                r.n_symbol_errors,
                format_sig(r.ser),
                format_sig(r.ci_low),
                format_sig(r.ci_high),
                format_sig(r.wall_time_s),
            );
        }
        out
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n);
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let lo = (center - half).max(0.0).min(p);
    let hi = (center + half).min(1.0).max(p);
    (lo, hi)
}

/// Plain decimal with at least six significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.6}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Writes `report` to `path` as CSV.
pub fn emit_csv(report: &SerReport, path: &Path) -> Result<(), ReportError> {
    fs::write(path, report.to_csv()).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads rows back from CSV text produced by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<SerRow>, ReportError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => {
            return Err(ReportError::Parse {
                line: 1,
                reason: "missing header".into(),
            })
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let err = |reason: String| ReportError::Parse { line: i + 2, reason };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(err(format!("expected 8 fields, got {}", f.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s}: {e}")));
            let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("{s}: {e}")));
            Ok(SerRow {
                detector: f[0].to_string(),
                snr_db: float(f[1])?,
                n_symbols: int(f[2])?,
                n_symbol_errors: int(f[3])?,
                ser: float(f[4])?,
                ci_low: float(f[5])?,
                ci_high: float(f[6])?,
                wall_time_s: float(f[7])?,
                n_excluded_trials: 0,
                n_trials: 0,
            })
        })
        .collect()
}
