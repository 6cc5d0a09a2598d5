//! Unit-power square QAM alphabets.
//!
//! A square QAM constellation factorizes into two identical PAM alphabets,
//! one per real dimension. Points are stored in canonical order: row-major
//! over `(real_index, imag_index)`, each ascending. Quantization ties resolve
//! to the smallest canonical index.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Square QAM constellation normalized to unit average power.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    points: Vec<Complex64>,
    pam_levels: Vec<f64>,
    average_power: f64,
}

impl Constellation {
    /// Builds the `order`-point square QAM alphabet (4, 16, 64 or 256).
    pub fn qam(order: usize) -> Result<Self> {
        let side = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            256 => 16,
            _ => return Err(Error::UnsupportedOrder(order)),
        };
        // Mean of (2k - (side - 1))^2 over one dimension is (side^2 - 1) / 3.
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let pam_levels: Vec<f64> = (0..side)
            .map(|k| (2.0 * k as f64 - (side as f64 - 1.0)) * scale)
            .collect();
        let points: Vec<Complex64> = pam_levels
            .iter()
            .flat_map(|&re| pam_levels.iter().map(move |&im| Complex64::new(re, im)))
            .collect();
        let average_power = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
        Ok(Self {
            order,
            points,
            pam_levels,
            average_power,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Complex points in canonical order.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Per-dimension alphabet, ascending.
    pub fn pam_levels(&self) -> &[f64] {
        &self.pam_levels
    }

    pub fn average_power(&self) -> f64 {
        self.average_power
    }

    /// Smallest distance between adjacent PAM levels.
    pub fn min_pam_gap(&self) -> f64 {
        self.pam_levels[1] - self.pam_levels[0]
    }

    /// Canonical index of the point with the given per-dimension indices.
    pub fn index_of(&self, re_index: usize, im_index: usize) -> usize {
        re_index * self.pam_levels.len() + im_index
    }

    /// Nearest PAM level index; ties go to the lower index.
    pub fn nearest_level(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, &a) in self.pam_levels.iter().enumerate() {
            let d = (x - a).abs();
            if d < best_dist {
                best_dist = d;
                best = k;
            }
        }
        best
    }

    /// Canonical index of the point nearest to `point`.
    pub fn quantize_index(&self, point: Complex64) -> Result<usize> {
        if !point.re.is_finite() || !point.im.is_finite() {
            return Err(Error::NonFinite("point to quantize"));
        }
        Ok(self.index_of(self.nearest_level(point.re), self.nearest_level(point.im)))
    }

    /// Nearest constellation point to `point`.
    pub fn quantize(&self, point: Complex64) -> Result<Complex64> {
        Ok(self.points[self.quantize_index(point)?])
    }

    /// Elementwise [`quantize`](Self::quantize).
    pub fn quantize_all(&self, points: &[Complex64]) -> Result<Vec<Complex64>> {
        points.iter().map(|&p| self.quantize(p)).collect()
    }

    /// True if `s` is exactly one of the constellation points.
    pub fn contains(&self, s: Complex64) -> bool {
        self.points.contains(&s)
    }
}

/// Counts positions where `estimate` and `truth` differ, returning
/// `(errors, total)`.
pub fn count_symbol_errors(estimate: &[Complex64], truth: &[Complex64]) -> Result<(usize, usize)> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "estimate vs truth",
            left: estimate.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("symbol vectors"));
    }
    let errors = estimate.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok((errors, truth.len()))
}
