//! Polynomial and exponential localization of a frame against a reference
//! Riesz basis and its canonical dual.
//!
//! Everything reduces to the diagonal profile
//! `p(d) = max_{|m-n| = d} max(|<e_m, g_n>|, |<e_m, dual g_n>|)`; the smallest
//! admissible constant for an envelope `env(d)` is then `max_d p(d) / env(d)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSystem;
use crate::seqspaces::{relative_change, NOISE_FLOOR};

/// Default cap on localization constants.
pub const DEFAULT_CAP: f64 = 1e6;

/// Relative change between ladder steps still counted as stable.
pub const LADDER_STABILITY: f64 = 0.15;

#[derive(Debug, Clone)]
pub struct CrossGram {
    /// `<e_m, g_n>`
    pub against_basis: DMatrix<f64>,
    /// `<e_m, dual g_n>`
    pub against_dual: DMatrix<f64>,
    /// `max |<g_m, dual g_n> - delta_mn|` of the reference pair.
    pub solver_residual: f64,
}

impl CrossGram {
    /// Cross-Gram from explicit matrices (no reference dual residual).
    pub fn from_matrices(against_basis: DMatrix<f64>, against_dual: DMatrix<f64>) -> Result<Self> {
        if against_basis.shape() != against_dual.shape() {
            return Err(Error::DimensionMismatch {
                expected: against_basis.len(),
                got: against_dual.len(),
            });
        }
        if against_basis.is_empty() {
            return Err(Error::Empty("cross-Gram matrix"));
        }
        if against_basis.iter().chain(against_dual.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cross-Gram matrix".into()));
        }
        Ok(Self {
            against_basis,
            against_dual,
            solver_residual: 0.0,
        })
    }

    /// `p(d)` for `d = 0 .. max(N, M)`. Entries below [`NOISE_FLOOR`] times the
    /// largest entry count as zero.
    pub fn diagonal_profile(&self) -> Vec<f64> {
        let (rows, cols) = self.against_basis.shape();
        let mut profile = vec![0.0f64; rows.max(cols)];
        for m in 0..rows {
            for n in 0..cols {
                let v = self.against_basis[(m, n)].abs().max(self.against_dual[(m, n)].abs());
                let d = m.abs_diff(n);
                if v > profile[d] {
                    profile[d] = v;
                }
            }
        }
        let floor = NOISE_FLOOR * profile.iter().fold(0.0f64, |a, v| a.max(*v));
        for p in &mut profile {
            if *p <= floor {
                *p = 0.0;
            }
        }
        profile
    }
}

/// `<e_m, g_n>` and `<e_m, dual g_n>` for frames in the same Hermite truncation.
pub fn cross_gram(frame: &FrameSystem, reference: &FrameSystem) -> Result<CrossGram> {
    if frame.dimension() != reference.dimension() {
        return Err(Error::DimensionMismatch {
            expected: reference.dimension(),
            got: frame.dimension(),
        });
    }
    let diag = reference.is_riesz_basis();
    if !diag.is_riesz_basis {
        return Err(Error::NotRieszBasis(format!(
            "reference has {} elements but Gram rank {}",
            diag.elements, diag.rank_gram
        )));
    }
    let dual = reference.dual_coeffs()?;
    let g = reference.coeffs();
    let biorth = g * dual.transpose();
    let solver_residual = (biorth - DMatrix::identity(g.nrows(), g.nrows())).amax();
    Ok(CrossGram {
        against_basis: frame.coeffs() * g.transpose(),
        against_dual: frame.coeffs() * dual.transpose(),
        solver_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationKind {
    /// envelope `(1 + |m - n|)^{-s}`
    Polynomial,
    /// envelope `exp(-s |m - n|)`
    Exponential,
}

impl LocalizationKind {
    fn log_envelope(self, s: f64, d: usize) -> f64 {
        match self {
            LocalizationKind::Polynomial => -s * (1.0 + d as f64).ln(),
            LocalizationKind::Exponential => -s * d as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub order: f64,
    pub constant: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub kind: LocalizationKind,
    pub cap: f64,
    pub orders: Vec<OrderResult>,
    /// Largest tested order whose constant stays under the cap.
    pub largest_passing_order: Option<f64>,
    /// Offset beyond which the profile is identically zero, if any.
    pub bandwidth: Option<usize>,
    /// RMS residual of a log-scale fit of the nonzero profile against the envelope shape.
    pub envelope_fit_residual: f64,
    /// Decay exponent of that fit.
    pub envelope_fit_rate: f64,
    pub solver_residual: f64,
}

impl LocalizationReport {
    pub fn all_passed(&self) -> bool {
        self.orders.iter().all(|o| o.passed)
    }

    pub fn constant(&self, order: f64) -> Option<f64> {
        self.orders.iter().find(|o| o.order == order).map(|o| o.constant)
    }
}

fn check(x: &CrossGram, kind: LocalizationKind, orders: &[f64], cap: f64) -> LocalizationReport {
    let profile = x.diagonal_profile();
    let mut results: Vec<OrderResult> = orders
        .iter()
        .map(|&s| {
            let constant = profile
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(d, p)| (p.ln() - kind.log_envelope(s, d)).exp())
                .fold(0.0, f64::max);
            OrderResult {
                order: s,
                constant,
                passed: constant <= cap,
            }
        })
        .collect();
    results.sort_by(|a, b| a.order.total_cmp(&b.order));
    let largest_passing_order = results.iter().filter(|o| o.passed).map(|o| o.order).fold(None, |acc: Option<f64>, s| {
        Some(acc.map_or(s, |a| a.max(s)))
    });
    let bandwidth = profile.iter().rposition(|p| *p > 0.0);
    let bandwidth = bandwidth.filter(|b| b + 1 < profile.len());

    let pts: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 1e-300)
        .map(|(d, p)| {
            let x = match kind {
                LocalizationKind::Polynomial => (1.0 + d as f64).ln(),
                LocalizationKind::Exponential => d as f64,
            };
            (x, p.ln())
        })
        .collect();
    let (envelope_fit_rate, envelope_fit_residual) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let rms = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
        (-slope, rms)
    } else {
        (f64::INFINITY, 0.0)
    };

    LocalizationReport {
        kind,
        cap,
        orders: results,
        largest_passing_order,
        bandwidth,
        envelope_fit_residual,
        envelope_fit_rate,
        solver_residual: x.solver_residual,
    }
}

/// `C_s = max_{m,n} max(|B_mn|, |D_mn|) (1 + |m - n|)^s` for each order `s`.
pub fn check_polynomial_localization(x: &CrossGram, orders: &[f64], cap: f64) -> LocalizationReport {
    check(x, LocalizationKind::Polynomial, orders, cap)
}

/// `C_s = max_{m,n} max(|B_mn|, |D_mn|) exp(s |m - n|)` for each rate `s`.
pub fn check_exponential_localization(x: &CrossGram, rates: &[f64], cap: f64) -> LocalizationReport {
    check(x, LocalizationKind::Exponential, rates, cap)
}

/// Localization of a Riesz basis against itself: its Gram matrix and its
/// cross-Gram with the canonical dual.
pub fn check_self_localization(
    basis: &FrameSystem,
    kind: LocalizationKind,
    orders: &[f64],
    cap: f64,
) -> Result<LocalizationReport> {
    let x = cross_gram(basis, basis)?;
    Ok(check(&x, kind, orders, cap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStability {
    pub order: f64,
    /// Constant at each ladder step.
    pub constants: Vec<f64>,
    /// Largest relative change between consecutive steps.
    pub max_relative_change: f64,
    pub stable: bool,
}

/// Compares constants of the same orders across reports from a truncation ladder.
pub fn ladder_stability(reports: &[LocalizationReport]) -> Vec<OrderStability> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .orders
        .iter()
        .map(|o| {
            let constants: Vec<f64> = reports
                .iter()
                .map(|r| r.constant(o.order).unwrap_or(f64::NAN))
                .collect();
            let max_relative_change = constants
                .windows(2)
                .map(|w| relative_change(w[0], w[1]))
                .fold(0.0, f64::max);
            OrderStability {
                order: o.order,
                stable: max_relative_change <= LADDER_STABILITY && constants.iter().all(|c| c.is_finite()),
                constants,
                max_relative_change,
            }
        })
        .collect()
}
