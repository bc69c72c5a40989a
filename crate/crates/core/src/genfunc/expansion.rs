//! Frame expansions of test functions and distributions, checked across a
//! truncation ladder.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ladder_sums, validate_ladder, DistributionFunctional, PairingReport, TestFunction};
use crate::error::{Error, Result};
use crate::frame::{FrameSystem, ReconstructionMode};
use crate::localization::{check_polynomial_localization, CrossGram, DEFAULT_CAP};
use crate::seqspaces::{classify_decay, dual_pairing_bound, FIT_SKIP, relative_change, weighted_norm, DecayClassification, DecayModel, WeightFamily};

/// Relative agreement required between fitted decay rates.
pub const RATE_AGREEMENT: f64 = 0.20;

/// Relative change across ladder steps still counted as stable.
pub const CONSTANT_STABILITY: f64 = 0.15;

/// Orders checked before pairing through a frame.
const PRECONDITION_ORDERS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePairReport {
    pub functional: String,
    pub function: String,
    /// `sum_n <f, h_n> b_n`
    pub reference: f64,
    /// `sum_n F(e_n) <f, dual e_n>`
    pub dual_analysis: PairingReport,
    /// `sum_n F(dual e_n) <f, e_n>`
    pub dual_synthesis: PairingReport,
    pub error_dual_analysis: f64,
    pub error_dual_synthesis: f64,
    pub mutual_difference: f64,
    pub localization_warning: Option<String>,
}

fn hermite_cross_gram(frame: &FrameSystem) -> Result<CrossGram> {
    // the Hermite basis is orthonormal, so it is its own dual
    CrossGram::from_matrices(frame.coeffs().clone(), frame.coeffs().clone())
}

/// Pairs `F` with `f` through the frame `E` and its canonical dual, in both orders.
pub fn frame_pair(
    functional: &DistributionFunctional,
    frame: &FrameSystem,
    f: &TestFunction,
    ladder: &[usize],
) -> Result<FramePairReport> {
    validate_ladder(ladder)?;
    let m = frame.dimension();
    let b = DVector::from_column_slice(functional.coeffs.resized(m).values());
    let fv = DVector::from_column_slice(f.coefficients()?.resized(m).values());
    let c = frame.coeffs();
    let d = frame.dual_coeffs()?;

    let on_frame = c * &b;
    let on_dual = d * &b;
    let analysis = c * &fv;
    let dual_analysis = d * &fv;

    let terms_a: Vec<f64> = on_frame.iter().zip(dual_analysis.iter()).map(|(x, y)| x * y).collect();
    let terms_s: Vec<f64> = on_dual.iter().zip(analysis.iter()).map(|(x, y)| x * y).collect();
    let reference = b.dot(&fv);
    let ra = ladder_sums(&terms_a, ladder);
    let rs = ladder_sums(&terms_s, ladder);

    let loc = check_polynomial_localization(&hermite_cross_gram(frame)?, &PRECONDITION_ORDERS, DEFAULT_CAP);
    let localization_warning = (!loc.all_passed()).then(|| {
        let failed: Vec<String> = loc.orders.iter().filter(|o| !o.passed).map(|o| o.order.to_string()).collect();
        format!("frame fails polynomial localization at orders {}", failed.join(", "))
    });

    Ok(FramePairReport {
        functional: functional.label.clone(),
        function: f.label.clone(),
        reference,
        error_dual_analysis: (ra.value - reference).abs(),
        error_dual_synthesis: (rs.value - reference).abs(),
        mutual_difference: (ra.value - rs.value).abs(),
        dual_analysis: ra,
        dual_synthesis: rs,
        localization_warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalGradeBound {
    pub grade: usize,
    /// dual norm of the frame-side sequence `(a_n)`
    pub coefficient_dual_norm: f64,
    /// `||U||_{X_k -> Theta_k}`
    pub analysis_norm: f64,
    pub composed_bound: f64,
    /// exact dual norm of the functional, from its Hermite coefficients
    pub hermite_dual_norm: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalBoundReport {
    /// Hermite coefficients `b = C^T a` of `f -> sum_n <f, e_n> a_n`.
    pub hermite_coeffs: Vec<f64>,
    pub grades: Vec<FunctionalGradeBound>,
}

/// The functional `f -> sum_n <f, e_n> a_n` and its graded boundedness:
/// `|F(f)| <= ||a||_{k,dual} ||U||_k ||f||_{X_k}`.
pub fn coefficient_functional(
    frame: &FrameSystem,
    a: &[f64],
    family: &WeightFamily,
    max_grade: usize,
    seed: u64,
) -> Result<FunctionalBoundReport> {
    let b = frame.synthesize_frame(a)?;
    let table = frame.graded_operator_norms(family, max_grade, seed)?;
    let grades = table
        .grades
        .iter()
        .map(|g| {
            let coefficient_dual_norm = dual_pairing_bound(a, family, g.grade)?;
            let hermite_dual_norm = dual_pairing_bound(&b, family, g.grade)?;
            let composed_bound = coefficient_dual_norm * g.analysis.estimate;
            Ok(FunctionalGradeBound {
                grade: g.grade,
                coefficient_dual_norm,
                analysis_norm: g.analysis.estimate,
                composed_bound,
                hermite_dual_norm,
                consistent: hermite_dual_norm <= composed_bound * (1.0 + 1e-10),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FunctionalBoundReport {
        hermite_coeffs: b,
        grades,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub truncation: usize,
    /// `||sum <f, dual e_n> e_n - f_M|| / ||f_M||` on the truncated span
    pub span_error_dual_analysis: f64,
    pub span_error_dual_synthesis: f64,
    pub mutual_difference: f64,
    /// per grade: `||reconstruction - f||_k / ||f||_k` against the top-truncation `f`
    pub graded_error: Vec<f64>,
    /// per grade: `||(<f_M, e_n>)||_k / ||f_M||_k`
    pub frame_ratio: Vec<f64>,
    /// per grade: `||(<f_M, dual e_n>)||_k / ||f_M||_k`
    pub dual_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTransfer {
    pub hermite: DecayClassification,
    pub frame: DecayClassification,
    pub dual: DecayClassification,
    pub frame_matches: bool,
    pub dual_matches: bool,
}

/// Whether `other` has the decay property of `reference`.
///
/// A finitely supported reference has no finite rate; it is matched by any
/// sequence with at least geometric decay. Otherwise the models must agree
/// and the rates must be within [`RATE_AGREEMENT`]. Sub-exponential fits with
/// different exponents are compared through the fitted log-decay
/// `rate (n^beta - n0^beta)` accumulated from the first fitted index `n0` up
/// to `at_index`.
pub fn decay_matches(reference: &DecayClassification, other: &DecayClassification, at_index: f64) -> bool {
    if reference.finitely_supported() {
        return other.model == DecayModel::Exponential;
    }
    if reference.model != other.model || other.finitely_supported() {
        return false;
    }
    match (reference.beta, other.beta) {
        (Some(b1), Some(b2)) if b1 != b2 => {
            let n0 = (FIT_SKIP + 1) as f64;
            let decay = |rate: f64, beta: f64| rate * (at_index.powf(beta) - n0.powf(beta));
            relative_change(decay(reference.rate, b1), decay(other.rate, b2)) <= RATE_AGREEMENT
        }
        _ => relative_change(reference.rate, other.rate) <= RATE_AGREEMENT,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionExpansion {
    pub label: String,
    pub steps: Vec<LadderStep>,
    pub decay: DecayTransfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeConstants {
    pub grade: usize,
    /// `min_f ||(<f, e_n>)||_k / ||f||_k` per ladder step
    pub lower: Vec<f64>,
    /// `max_f ||(<f, e_n>)||_k / ||f||_k` per ladder step
    pub upper: Vec<f64>,
    pub lower_change: f64,
    pub upper_change: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub ladder: Vec<usize>,
    pub weights: WeightFamily,
    pub functions: Vec<FunctionExpansion>,
    pub constants: Vec<GradeConstants>,
    pub max_span_error: f64,
    pub max_mutual_difference: f64,
    pub transfer_ok: bool,
}

/// One row of the frozen CSV schema `label,grade,truncation,metric,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub label: String,
    pub grade: Option<usize>,
    pub truncation: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl ExpansionReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        let mut push = |label: &str, grade: Option<usize>, truncation: Option<usize>, metric: &str, value: f64| {
            rows.push(CsvRow {
                label: label.to_string(),
                grade,
                truncation,
                metric: metric.to_string(),
                value,
            })
        };
        for f in &self.functions {
            for s in &f.steps {
                let t = Some(s.truncation);
                push(&f.label, Some(0), t, "span_error_dual_analysis", s.span_error_dual_analysis);
                push(&f.label, Some(0), t, "span_error_dual_synthesis", s.span_error_dual_synthesis);
                push(&f.label, Some(0), t, "mutual_difference", s.mutual_difference);
                for (k, v) in s.graded_error.iter().enumerate() {
                    push(&f.label, Some(k), t, "graded_error", *v);
                }
                for (k, v) in s.frame_ratio.iter().enumerate() {
                    push(&f.label, Some(k), t, "frame_ratio", *v);
                }
                for (k, v) in s.dual_ratio.iter().enumerate() {
                    push(&f.label, Some(k), t, "dual_ratio", *v);
                }
            }
            for (side, d) in [("hermite", &f.decay.hermite), ("frame", &f.decay.frame), ("dual", &f.decay.dual)] {
                push(&f.label, None, self.ladder.last().copied(), &format!("decay_rate_{side}"), d.rate);
            }
        }
        for g in &self.constants {
            for (i, &m) in self.ladder.iter().enumerate() {
                push("*", Some(g.grade), Some(m), "frame_lower_constant", g.lower[i]);
                push("*", Some(g.grade), Some(m), "frame_upper_constant", g.upper[i]);
            }
        }
        rows
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn expand_one(
    frames: &[FrameSystem],
    f: &TestFunction,
    family: &WeightFamily,
    max_grade: usize,
    ladder: &[usize],
) -> Result<FunctionExpansion> {
    let top = *ladder.last().expect("validated ladder");
    let full = f.coefficients()?;
    if full.len() < top {
        return Err(Error::Truncation(format!(
            "'{}' has {} coefficients, ladder reaches {top}",
            f.label,
            full.len()
        )));
    }
    let full = &full.values()[..top];
    let full_norms: Vec<f64> = (0..=max_grade)
        .map(|k| weighted_norm(full, family, k))
        .collect::<Result<_>>()?;

    let mut steps = Vec::with_capacity(ladder.len());
    for (frame, &m) in frames.iter().zip(ladder) {
        let fm = &full[..m];
        let fm_norm = fm.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (ra, res_a) = frame.reconstruct_with_residual(fm, ReconstructionMode::DualAnalysis)?;
        let (rs, res_s) = frame.reconstruct_with_residual(fm, ReconstructionMode::DualSynthesis)?;
        let mutual = ra.iter().zip(&rs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();

        let mut padded = ra.clone();
        padded.resize(top, 0.0);
        let diff: Vec<f64> = padded.iter().zip(full).map(|(a, b)| a - b).collect();
        let coeffs = frame.analyze(fm)?;
        let dual_coeffs = (frame.dual_coeffs()? * DVector::from_column_slice(fm)).as_slice().to_vec();

        let mut graded_error = Vec::with_capacity(max_grade + 1);
        let mut frame_ratio = Vec::with_capacity(max_grade + 1);
        let mut dual_ratio = Vec::with_capacity(max_grade + 1);
        for (k, full_k) in full_norms.iter().enumerate() {
            let fm_k = weighted_norm(fm, family, k)?;
            graded_error.push(ratio(weighted_norm(&diff, family, k)?, *full_k));
            frame_ratio.push(ratio(weighted_norm(&coeffs, family, k)?, fm_k));
            dual_ratio.push(ratio(weighted_norm(&dual_coeffs, family, k)?, fm_k));
        }
        steps.push(LadderStep {
            truncation: m,
            span_error_dual_analysis: ratio(res_a, fm_norm),
            span_error_dual_synthesis: ratio(res_s, fm_norm),
            mutual_difference: ratio(mutual, fm_norm),
            graded_error,
            frame_ratio,
            dual_ratio,
        });
    }

    let top_frame = frames.last().expect("validated ladder");
    let fm = &full[..top];
    let hermite = classify_decay(fm)?;
    let frame_side = classify_decay(&top_frame.analyze(fm)?)?;
    let dual_side = classify_decay((top_frame.dual_coeffs()? * DVector::from_column_slice(fm)).as_slice())?;
    let at = top as f64;
    let decay = DecayTransfer {
        frame_matches: decay_matches(&hermite, &frame_side, at),
        dual_matches: decay_matches(&hermite, &dual_side, at),
        hermite,
        frame: frame_side,
        dual: dual_side,
    };
    Ok(FunctionExpansion {
        label: f.label.clone(),
        steps,
        decay,
    })
}

/// Reconstruction, decay transfer and empirical frame constants of a frame
/// family over a corpus.
///
/// `frame_at(m)` must return the frame truncated to `m` Hermite coefficients;
/// every corpus function must already carry at least `max(ladder)` coefficients.
pub fn verify_expansion_theorem<F>(
    frame_at: F,
    corpus: &[TestFunction],
    family: &WeightFamily,
    max_grade: usize,
    ladder: &[usize],
) -> Result<ExpansionReport>
where
    F: Fn(usize) -> Result<FrameSystem>,
{
    if corpus.is_empty() {
        return Err(Error::Empty("test-function corpus"));
    }
    validate_ladder(ladder)?;
    family.check_grade(max_grade)?;
    let frames: Vec<FrameSystem> = ladder
        .iter()
        .map(|&m| {
            let frame = frame_at(m)?;
            if frame.dimension() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: frame.dimension(),
                });
            }
            frame.dual_coeffs()?;
            Ok(frame)
        })
        .collect::<Result<_>>()?;

    let functions: Vec<FunctionExpansion> = corpus
        .par_iter()
        .map(|f| expand_one(&frames, f, family, max_grade, ladder))
        .collect::<Result<_>>()?;

    let constants = (0..=max_grade)
        .map(|k| {
            let per_step = |pick: fn(f64, f64) -> f64, init: f64| -> Vec<f64> {
                (0..ladder.len())
                    .map(|i| {
                        functions
                            .iter()
                            .map(|f| f.steps[i].frame_ratio[k])
                            .filter(|v| v.is_finite())
                            .fold(init, pick)
                    })
                    .collect()
            };
            let lower = per_step(f64::min, f64::INFINITY);
            let upper = per_step(f64::max, 0.0);
            let change = |v: &[f64]| v.windows(2).map(|w| relative_change(w[0], w[1])).fold(0.0, f64::max);
            let lower_change = change(&lower);
            let upper_change = change(&upper);
            GradeConstants {
                grade: k,
                stable: lower_change <= CONSTANT_STABILITY
                    && upper_change <= CONSTANT_STABILITY
                    && lower.iter().all(|v| v.is_finite() && *v > 0.0)
                    && upper.iter().all(|v| v.is_finite()),
                lower,
                upper,
                lower_change,
                upper_change,
            }
        })
        .collect();

    let steps = functions.iter().flat_map(|f| f.steps.iter());
    let max_span_error = steps
        .clone()
        .map(|s| s.span_error_dual_analysis.max(s.span_error_dual_synthesis))
        .fold(0.0, f64::max);
    let max_mutual_difference = steps.map(|s| s.mutual_difference).fold(0.0, f64::max);
    let transfer_ok = functions.iter().all(|f| f.decay.frame_matches && f.decay.dual_matches);
    Ok(ExpansionReport {
        ladder: ladder.to_vec(),
        weights: *family,
        functions,
        constants,
        max_span_error,
        max_mutual_difference,
        transfer_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfunc::{corpus_standard, CorpusKind, ExpolSpec, FunctionClass};
    use crate::hermite::{CoefficientVector, HermiteContext};

    #[test]
    fn identity_frame_pairing_reduces_to_hermite() {
        let ctx = HermiteContext::new(64).unwrap();
        let id = FrameSystem::identity(64).unwrap();
        let delta = DistributionFunctional::delta(64);
        let g = ctx.hermite_coefficients(|x| (-x * x).exp(), 64).unwrap();
        let f = TestFunction::from_coefficients("g", g, FunctionClass::Schwartz);
        let r = frame_pair(&delta, &id, &f, &[16, 32, 64]).unwrap();
        assert!(r.error_dual_analysis < 1e-15 && r.error_dual_synthesis < 1e-15);
        assert!(r.localization_warning.is_none());
        assert!((r.reference - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_expansion_is_exact() {
        let ctx = HermiteContext::new(64).unwrap();
        let corpus = corpus_standard(CorpusKind::Schwartz, &ctx, 64).unwrap();
        let family = WeightFamily::polynomial(3);
        let rep = verify_expansion_theorem(FrameSystem::identity, &corpus, &family, 3, &[16, 32, 64]).unwrap();
        assert!(rep.max_span_error == 0.0);
        for g in &rep.constants {
            assert!(g.lower.iter().chain(&g.upper).all(|v| (*v - 1.0).abs() < 1e-15));
        }
        assert!(rep.functions.iter().all(|f| f.steps.last().unwrap().graded_error[0] == 0.0));
    }

    #[test]
    fn functional_bounds_compose() {
        let e = ExpolSpec::constant(vec![0.3]).build(32).unwrap().system;
        let a: Vec<f64> = (0..32).map(|n| 1.0 / (1.0 + n as f64)).collect();
        let rep = coefficient_functional(&e, &a, &WeightFamily::polynomial(3), 3, 5).unwrap();
        assert!(rep.grades.iter().all(|g| g.consistent));
    }

    #[test]
    fn verify_rejects_bad_inputs() {
        let family = WeightFamily::polynomial(2);
        assert!(verify_expansion_theorem(FrameSystem::identity, &[], &family, 2, &[8]).is_err());
        let short = TestFunction::from_coefficients("s", CoefficientVector::unit(8, 0).unwrap(), FunctionClass::Schwartz);
        assert!(verify_expansion_theorem(FrameSystem::identity, std::slice::from_ref(&short), &family, 3, &[8]).is_err());
        assert!(verify_expansion_theorem(FrameSystem::identity, &[short], &family, 2, &[16]).is_err());
    }
}
