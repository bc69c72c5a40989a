//! Graded weight families, weighted `l^2` norms and empirical decay
//! classification of coefficient sequences.
//!
//! Weights are evaluated at the one-based sequence index: the entry stored at
//! position `i` is weighted by `mu_k(i + 1)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Leading entries ignored by [`classify_decay`]; decay laws are asymptotic.
pub const FIT_SKIP: usize = 8;

/// Minimum length accepted by [`classify_decay`].
pub const MIN_CLASSIFY_LEN: usize = 16;

/// Entries below this magnitude count as exact zeros.
pub const EXACT_ZERO: f64 = 1e-300;

/// Entries below this fraction of the largest magnitude are rounding noise
/// and are left out of the fit, unless the sequence is still resolved there.
pub const NOISE_FLOOR: f64 = 1e-13;

/// A tail is resolved down to this multiple of its last-quarter maximum.
const NOISE_MARGIN: f64 = 100.0;

/// Significance level at which a sub-exponential fit replaces a two-parameter one.
const EXPONENT_SIGNIFICANCE: f64 = 0.01;

/// Log-scale residuals below this count as exact fits.
const RESIDUAL_FLOOR: f64 = 1e-15;

/// Exponents tried for the sub-exponential model `exp(-rate * n^beta)`.
const SUBEXP_BETAS: [f64; 8] = [0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    /// `mu_k(n) = (1 + n)^k`
    Polynomial,
    /// `mu_k(n) = exp(k n^beta)`, `0 < beta < 1`
    SubExponential { beta: f64 },
}

/// A graded family `mu_0 <= mu_1 <= ... <= mu_K` with `mu_0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFamily {
    #[serde(flatten)]
    kind: WeightKind,
    max_grade: usize,
}

impl WeightFamily {
    pub fn polynomial(max_grade: usize) -> Self {
        Self {
            kind: WeightKind::Polynomial,
            max_grade,
        }
    }

    pub fn sub_exponential(beta: f64, max_grade: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Config(format!("sub-exponential beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self {
            kind: WeightKind::SubExponential { beta },
            max_grade,
        })
    }

    /// Sub-exponential family paired with the Gevrey index `alpha`: `beta = 1/(2 alpha)`.
    pub fn for_gevrey(alpha: f64, max_grade: usize) -> Result<Self> {
        if !(alpha > 0.5) {
            return Err(Error::Config(format!("Gevrey index must exceed 1/2, got {alpha}")));
        }
        Self::sub_exponential(1.0 / (2.0 * alpha), max_grade)
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn max_grade(&self) -> usize {
        self.max_grade
    }

    pub fn beta(&self) -> Option<f64> {
        match self.kind {
            WeightKind::SubExponential { beta } => Some(beta),
            WeightKind::Polynomial => None,
        }
    }

    pub fn check_grade(&self, k: usize) -> Result<()> {
        if k > self.max_grade {
            return Err(Error::GradeOutOfRange {
                grade: k,
                max: self.max_grade,
            });
        }
        Ok(())
    }

    /// `mu_k(n)` for a non-negative argument `n`.
    pub fn weight(&self, k: usize, n: f64) -> f64 {
        let kf = k as f64;
        match self.kind {
            WeightKind::Polynomial => (1.0 + n.abs()).powf(kf),
            WeightKind::SubExponential { beta } => (kf * n.abs().powf(beta)).exp(),
        }
    }

    /// Weights for positions `0..len`, i.e. `mu_k(1), ..., mu_k(len)`.
    pub fn weights(&self, k: usize, len: usize) -> Vec<f64> {
        (0..len).map(|i| self.weight(k, (i + 1) as f64)).collect()
    }

    /// Translation bound `sup mu_k(t + x) / mu_k(x)` guaranteed for a shift `t`.
    pub fn moderation_factor(&self, k: usize, t: f64) -> f64 {
        let kf = k as f64;
        match self.kind {
            WeightKind::Polynomial => (1.0 + t.abs()).powf(kf),
            WeightKind::SubExponential { beta } => (kf * t.abs().powf(beta)).exp(),
        }
    }

    /// Smallest `C` with `mu_k(m + n) <= C * factor(m) * mu_k(n)` over
    /// `0 <= m, n < range`.
    pub fn empirical_moderation_constant(&self, k: usize, range: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..range {
            let factor = self.moderation_factor(k, m as f64);
            for n in 0..range {
                let ratio = self.weight(k, (m + n) as f64) / (factor * self.weight(k, n as f64));
                worst = worst.max(ratio);
            }
        }
        worst
    }
}

fn weighted_sum_sq(c: &[f64], weights: impl Iterator<Item = f64>, invert: bool) -> f64 {
    c.iter()
        .zip(weights)
        .map(|(v, w)| {
            let s = if invert { v / w } else { v * w };
            s * s
        })
        .sum()
}

/// `(sum_n |c_n|^2 mu_k(n)^2)^{1/2}`.
pub fn weighted_norm(c: &[f64], family: &WeightFamily, k: usize) -> Result<f64> {
    family.check_grade(k)?;
    let w = (0..c.len()).map(|i| family.weight(k, (i + 1) as f64));
    Ok(weighted_sum_sq(c, w, false).sqrt())
}

/// `(sum_n |b_n|^2 mu_k(n)^{-2})^{1/2}`, the norm on the dual of grade `k`.
///
/// By Cauchy–Schwarz, `|sum c_n b_n| <= weighted_norm(c, k) * dual_pairing_bound(b, k)`.
pub fn dual_pairing_bound(b: &[f64], family: &WeightFamily, k: usize) -> Result<f64> {
    family.check_grade(k)?;
    let w = (0..b.len()).map(|i| family.weight(k, (i + 1) as f64));
    Ok(weighted_sum_sq(b, w, true).sqrt())
}

/// Partial dual norms over dyadic truncations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBoundTrend {
    pub grade: usize,
    /// `(truncation, bound over the first `truncation` entries)`
    pub partials: Vec<(usize, f64)>,
    pub divergent: bool,
}

/// Ratio of successive dyadic increments above which a series counts as divergent.
const DIVERGENCE_RATIO: f64 = 0.9;

/// Evaluates [`dual_pairing_bound`] on truncations `2, 4, 8, ...` (plus the full
/// length) and flags a divergent trend when the increments of the squared
/// partial sums stop shrinking.
pub fn dual_pairing_trend(b: &[f64], family: &WeightFamily, k: usize) -> Result<DualBoundTrend> {
    family.check_grade(k)?;
    let mut cuts = Vec::new();
    let mut n = 2;
    while n < b.len() {
        cuts.push(n);
        n *= 2;
    }
    cuts.push(b.len());
    let mut partials = Vec::with_capacity(cuts.len());
    for &cut in &cuts {
        partials.push((cut, dual_pairing_bound(&b[..cut], family, k)?));
    }
    let sq: Vec<f64> = partials.iter().map(|(_, v)| v * v).collect();
    let increments: Vec<f64> = sq.windows(2).map(|w| w[1] - w[0]).collect();
    // the final cut need not be dyadic, so judge on the last complete doubling
    let dyadic = if cuts.len() >= 2 && !cuts[cuts.len() - 1].is_power_of_two() {
        &increments[..increments.len().saturating_sub(1)]
    } else {
        &increments[..]
    };
    let divergent = match dyadic {
        [.., prev, last] if *prev > 0.0 => *last >= DIVERGENCE_RATIO * prev,
        _ => false,
    };
    Ok(DualBoundTrend {
        grade: k,
        partials,
        divergent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Polynomial,
    Exponential,
    SubExponential,
    None,
}

/// Best log-scale fit of a coefficient tail.
///
/// `rate` is the decay exponent: `|c_n| ~ constant * n^{-rate}` (polynomial),
/// `constant * exp(-rate n)` (exponential) or `constant * exp(-rate n^beta)`
/// (sub-exponential). A finitely supported tail reports an exponential model
/// with `rate = +inf`, which serializes as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayClassification {
    pub model: DecayModel,
    pub rate: f64,
    pub constant: f64,
    pub residual: f64,
    pub beta: Option<f64>,
    pub flags: Vec<String>,
}

impl DecayClassification {
    pub fn finitely_supported(&self) -> bool {
        self.flags.iter().any(|f| f == "finitely_supported")
    }

    fn finite_support(last_index: usize) -> Self {
        Self {
            model: DecayModel::Exponential,
            rate: f64::INFINITY,
            constant: 0.0,
            residual: 0.0,
            beta: None,
            flags: vec!["finitely_supported".into(), format!("support_end={last_index}")],
        }
    }
}

struct LineFit {
    slope: f64,
    intercept: f64,
    rms: f64,
}

fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    LineFit { slope, intercept, rms }
}

/// Minimum number of resolved tail entries needed for a fit.
const MIN_FIT_POINTS: usize = 6;

/// Classify the decay of `c` by least-squares fits of `log|c_n|`.
///
/// The fit is made on the envelope `max_{j >= n} |c_j|`. The first
/// [`FIT_SKIP`] entries are ignored. Exact zeros and entries below the
/// noise floor are excluded; the floor is the smaller of [`NOISE_FLOOR`]
/// relative to the largest entry and a margin above the last-quarter maximum. When more than half of the tail is
/// exactly zero, or too few resolved entries remain, the sequence is reported
/// as finitely supported. The better of the polynomial and exponential fits is
/// kept unless the best sub-exponential fit improves on it significantly
/// (nested F-test, the exponent counted as a fitted parameter).
pub fn classify_decay(c: &[f64]) -> Result<DecayClassification> {
    if c.len() < MIN_CLASSIFY_LEN {
        return Err(Error::TooShort {
            need: MIN_CLASSIFY_LEN,
            got: c.len(),
        });
    }
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Empty("coefficient sequence is identically zero"));
    }
    let tail = &c[FIT_SKIP..];
    let exact_zeros = tail.iter().filter(|v| v.abs() < EXACT_ZERO).count();
    // a rounding plateau sets the last-quarter maximum; an exactly computed tail keeps decaying
    let plateau = c[c.len() - c.len() / 4..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (NOISE_FLOOR * scale).min(NOISE_MARGIN * plateau).max(EXACT_ZERO);
    let last_resolved = c.iter().rposition(|v| v.abs() > floor).unwrap_or(0);
    if 2 * exact_zeros > tail.len() {
        return Ok(DecayClassification::finite_support(last_resolved));
    }
    let points: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > floor)
        .map(|(i, v)| ((i + FIT_SKIP + 1) as f64, v.abs().ln()))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Ok(DecayClassification::finite_support(last_resolved));
    }
    let ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    // fit the tail supremum, so sign changes and cancellations do not read as decay
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    for i in (0..ys.len().saturating_sub(1)).rev() {
        ys[i] = ys[i].max(ys[i + 1]);
    }

    // two-parameter models compete on residual; the sub-exponential exponent has
    // to earn its extra degree of freedom by a nested F-test
    let classify = |model: DecayModel, beta: Option<f64>, xs: Vec<f64>| {
        let fit = fit_line(&xs, &ys);
        DecayClassification {
            model,
            rate: -fit.slope,
            constant: fit.intercept.exp(),
            residual: fit.rms,
            beta,
            flags: Vec::new(),
        }
    };
    let by_residual = |a: &DecayClassification, b: &DecayClassification| a.residual.total_cmp(&b.residual);
    let simple = [
        classify(DecayModel::Polynomial, None, ns.iter().map(|n| n.ln()).collect()),
        classify(DecayModel::Exponential, None, ns.clone()),
    ]
    .into_iter()
    .min_by(by_residual)
    .expect("two models");
    let sub = SUBEXP_BETAS
        .iter()
        .map(|&beta| classify(DecayModel::SubExponential, Some(beta), ns.iter().map(|n| n.powf(beta)).collect()))
        .min_by(by_residual)
        .expect("nonempty exponent grid");
    let count = ys.len() as f64;
    let rss = |d: &DecayClassification| count * d.residual.max(RESIDUAL_FLOOR).powi(2);
    let f_stat = (rss(&simple) - rss(&sub)) / (rss(&sub) / (count - 3.0));
    let critical = FisherSnedecor::new(1.0, count - 3.0)
        .expect("at least 3 degrees of freedom")
        .inverse_cdf(1.0 - EXPONENT_SIGNIFICANCE);
    let best = if f_stat > critical { sub } else { simple };
    let mut best = best;
    if best.rate <= 0.0 {
        best.model = DecayModel::None;
        best.flags.push("no_decay".into());
    }
    if last_resolved + 1 < c.len() {
        best.flags.push(format!("noise_floor_from={}", last_resolved + 1));
    }
    Ok(best)
}

/// Relative change of `b` against `a`.
pub fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b - a).abs() / a.abs().max(b.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_norm_examples() {
        let poly = WeightFamily::polynomial(6);
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        for k in 0..=6 {
            assert_eq!(weighted_norm(&e1, &poly, k).unwrap(), 2f64.powi(k as i32));
        }
        assert!((weighted_norm(&[1.0, 1.0], &poly, 0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(weighted_norm(&e1, &poly, 7), Err(Error::GradeOutOfRange { .. })));
    }

    #[test]
    fn geometric_sequence_matches_brute_force() {
        let poly = WeightFamily::polynomial(2);
        let c: Vec<f64> = (1..=40).map(|n| 2f64.powi(-n)).collect();
        // 80-term oracle with the one-based index written out explicitly
        let mut oracle = 0.0;
        for n in 1..=80i32 {
            let cn = if n <= 40 { 2f64.powi(-n) } else { 0.0 };
            let w = (1.0 + n as f64).powi(2);
            oracle += cn * cn * w * w;
        }
        let got = weighted_norm(&c, &poly, 2).unwrap();
        assert!((got - oracle.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn dual_bound_examples() {
        let poly = WeightFamily::polynomial(3);
        assert_eq!(dual_pairing_bound(&[1.0, 0.0], &poly, 3).unwrap(), 1.0 / 8.0);

        let linear: Vec<f64> = (1..=1024).map(|n| n as f64).collect();
        let t2 = dual_pairing_trend(&linear, &poly, 2).unwrap();
        assert!(!t2.divergent);
        assert!(t2.partials.last().unwrap().1.is_finite());
        let t0 = dual_pairing_trend(&linear, &poly, 0).unwrap();
        assert!(t0.divergent);

        // equality case of Cauchy-Schwarz
        let c: Vec<f64> = (0..20).map(|i| ((i as f64) * 0.7).sin()).collect();
        let k = 2;
        let b: Vec<f64> = c
            .iter()
            .enumerate()
            .map(|(i, v)| v * poly.weight(k, (i + 1) as f64).powi(2))
            .collect();
        let pairing: f64 = c.iter().zip(&b).map(|(x, y)| x * y).sum();
        let bound = weighted_norm(&c, &poly, k).unwrap() * dual_pairing_bound(&b, &poly, k).unwrap();
        assert!((pairing - bound).abs() <= 1e-12 * bound);
    }

    #[test]
    fn gevrey_pairing_sets_beta() {
        let w = WeightFamily::for_gevrey(1.0, 4).unwrap();
        assert_eq!(w.beta(), Some(0.5));
        assert!(WeightFamily::for_gevrey(0.5, 4).is_err());
        assert!(WeightFamily::sub_exponential(1.0, 4).is_err());
    }

    #[test]
    fn classify_planted_models() {
        let poly: Vec<f64> = (0..128).map(|i| (1.0 + i as f64).powi(-4)).collect();
        let c = classify_decay(&poly).unwrap();
        assert_eq!(c.model, DecayModel::Polynomial);
        assert!((3.8..=4.2).contains(&c.rate), "{c:?}");

        let exp: Vec<f64> = (0..128).map(|i| (-0.5 * i as f64).exp()).collect();
        let c = classify_decay(&exp).unwrap();
        assert_eq!(c.model, DecayModel::Exponential);
        assert!((0.45..=0.55).contains(&c.rate), "{c:?}");

        let mut finite = vec![0.0; 64];
        finite[..5].copy_from_slice(&[1.0, 0.5, 0.25, 0.1, 0.05]);
        assert!(classify_decay(&finite).unwrap().finitely_supported());

        assert!(matches!(classify_decay(&[1.0; 10]), Err(Error::TooShort { .. })));
        assert!(classify_decay(&[0.0; 32]).is_err());
    }

    #[test]
    fn classify_ignores_noise_floor() {
        // geometric decay down to rounding noise, as produced by quadrature
        let c: Vec<f64> = (0..256)
            .map(|i| {
                let v = (-0.55 * i as f64).exp();
                if v < 1e-17 {
                    1e-17 * if i % 2 == 0 { 1.0 } else { -0.7 }
                } else {
                    v
                }
            })
            .collect();
        let d = classify_decay(&c).unwrap();
        assert_eq!(d.model, DecayModel::Exponential);
        assert!((d.rate - 0.55).abs() < 0.01);
    }
}
