//! Test functions, Schwartz and Gevrey seminorms, and distributions given by
//! their Hermite coefficient sequences.

mod corpus;
mod expansion;
mod expol;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{hermite_values, hermite_values_at_zero, CoefficientVector, HermiteContext, LadderOperator};
use crate::seqspaces::DecayModel;

pub use corpus::{bump, compact_coefficients, corpus_standard, CorpusKind};
pub use expansion::{
    coefficient_functional, decay_matches, frame_pair, verify_expansion_theorem, CsvRow, DecayTransfer, ExpansionReport, FramePairReport,
    FunctionExpansion, FunctionalBoundReport, FunctionalGradeBound, GradeConstants, LadderStep, CONSTANT_STABILITY,
    RATE_AGREEMENT,
};
pub use expol::{build_expol_frame, ExpolFrame, ExpolPattern, ExpolSpec};

/// Highest Schwartz grade supported at desk scale.
pub const MAX_SCHWARTZ_GRADE: usize = 8;

/// Highest derivative order of the Gevrey surrogate.
pub const MAX_GEVREY_ORDER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum FunctionClass {
    Schwartz,
    Gevrey { alpha: f64 },
    None,
}

pub type Closure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Representation {
    Coefficients(CoefficientVector),
    Closure(Closure),
}

impl fmt::Debug for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Representation::Coefficients(c) => f.debug_tuple("Coefficients").field(&c.len()).finish(),
            Representation::Closure(_) => f.write_str("Closure"),
        }
    }
}

/// Decay expected of the Hermite coefficients of a corpus function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedDecay {
    pub model: DecayModel,
    pub finitely_supported: bool,
}

#[derive(Debug, Clone)]
pub struct TestFunction {
    pub label: String,
    pub representation: Representation,
    pub claimed_class: FunctionClass,
    pub expected_decay: Option<ExpectedDecay>,
}

impl TestFunction {
    pub fn from_coefficients(label: impl Into<String>, coeffs: CoefficientVector, class: FunctionClass) -> Self {
        Self {
            label: label.into(),
            representation: Representation::Coefficients(coeffs),
            claimed_class: class,
            expected_decay: None,
        }
    }

    pub fn from_closure<F>(label: impl Into<String>, f: F, class: FunctionClass) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            representation: Representation::Closure(Arc::new(f)),
            claimed_class: class,
            expected_decay: None,
        }
    }

    pub fn with_expected_decay(mut self, model: DecayModel, finitely_supported: bool) -> Self {
        self.expected_decay = Some(ExpectedDecay {
            model,
            finitely_supported,
        });
        self
    }

    pub fn coefficients(&self) -> Result<&CoefficientVector> {
        match &self.representation {
            Representation::Coefficients(c) => Ok(c),
            Representation::Closure(_) => Err(Error::Domain(format!(
                "test function '{}' must be ingested into Hermite coordinates first",
                self.label
            ))),
        }
    }

    /// Hermite-coordinate version with `count` coefficients.
    pub fn ingest(&self, ctx: &HermiteContext, count: usize) -> Result<TestFunction> {
        let coeffs = match &self.representation {
            Representation::Coefficients(c) => c.resized(count),
            Representation::Closure(f) => ctx.hermite_coefficients(|x| f(x), count)?,
        };
        Ok(Self {
            representation: Representation::Coefficients(coeffs),
            ..self.clone()
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<TestFunction> {
        let c = self.coefficients()?.scaled(factor);
        Ok(Self {
            label: format!("{}*{}", factor, self.label),
            representation: Representation::Coefficients(c),
            ..self.clone()
        })
    }
}

/// A grid approximation of a seminorm: a lower bound of the true supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormValue {
    pub value: f64,
    pub argmax_x: f64,
    pub argmax_order: usize,
    pub max_order: usize,
    pub grid_step: f64,
    pub domain_cutoff: f64,
}

/// Coefficients of `f, f', ..., f^{(order)}`, each of length `len + order`.
fn derivative_stack(ctx: &HermiteContext, c: &[f64], order: usize) -> Result<Vec<Vec<f64>>> {
    let size = c.len() + order;
    if size > ctx.max_index() {
        return Err(Error::Truncation(format!(
            "{} coefficients plus {} derivative bands exceed the context size {}",
            c.len(),
            order,
            ctx.max_index()
        )));
    }
    let d = LadderOperator::derivative(size);
    let mut stack = Vec::with_capacity(order + 1);
    let mut cur = c.to_vec();
    cur.resize(size, 0.0);
    for _ in 0..order {
        let next = d.apply(&cur)?;
        stack.push(std::mem::replace(&mut cur, next));
    }
    stack.push(cur);
    Ok(stack)
}

/// Sup over the sampling grid and derivative orders `n <= order` of
/// `weight(n, x) |f^{(n)}(x)|`.
fn weighted_sup<W>(ctx: &HermiteContext, c: &[f64], order: usize, weight: W) -> Result<SeminormValue>
where
    W: Fn(usize, f64) -> f64,
{
    let stack = derivative_stack(ctx, c, order)?;
    let size = c.len() + order;
    let mut buf = vec![0.0; size];
    let mut best = SeminormValue {
        value: 0.0,
        argmax_x: 0.0,
        argmax_order: 0,
        max_order: order,
        grid_step: ctx.grid_step(),
        domain_cutoff: ctx.domain_cutoff(),
    };
    for x in ctx.sampling_grid() {
        hermite_values(x, &mut buf);
        for (n, coeffs) in stack.iter().enumerate() {
            let v: f64 = coeffs.iter().zip(&buf).map(|(a, h)| a * h).sum();
            let w = weight(n, x) * v.abs();
            if w > best.value {
                best.value = w;
                best.argmax_x = x;
                best.argmax_order = n;
            }
        }
    }
    Ok(best)
}

/// `sup_x sup_{m <= k} |f^{(m)}(x)| (1 + x^2)^{k/2}` on the sampling grid.
pub fn schwartz_seminorm(ctx: &HermiteContext, f: &TestFunction, k: usize) -> Result<SeminormValue> {
    if k > MAX_SCHWARTZ_GRADE {
        return Err(Error::GradeOutOfRange {
            grade: k,
            max: MAX_SCHWARTZ_GRADE,
        });
    }
    let c = f.coefficients()?;
    let half_k = k as f64 / 2.0;
    weighted_sup(ctx, c.values(), k, |_, x| (1.0 + x * x).powf(half_k))
}

/// Finite-order surrogate of the Gevrey seminorm:
/// `max_{n <= max_order} sup_x h^n exp(m |x|^{1/alpha}) |f^{(n)}(x)| / n!^alpha`.
pub fn gevrey_seminorm(
    ctx: &HermiteContext,
    f: &TestFunction,
    h: f64,
    m: f64,
    alpha: f64,
    max_order: usize,
) -> Result<SeminormValue> {
    if !(h > 0.0 && m > 0.0) {
        return Err(Error::Domain(format!("Gevrey parameters must be positive (h = {h}, m = {m})")));
    }
    if !(alpha > 0.5) {
        return Err(Error::Domain(format!("Gevrey index must exceed 1/2, got {alpha}")));
    }
    if max_order > MAX_GEVREY_ORDER {
        return Err(Error::Domain(format!(
            "derivative order {max_order} exceeds the cap {MAX_GEVREY_ORDER}"
        )));
    }
    let c = f.coefficients()?;
    let log_fact: Vec<f64> = (0..=max_order)
        .scan(0.0, |acc, n| {
            if n > 0 {
                *acc += (n as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    weighted_sup(ctx, c.values(), max_order, |n, x| {
        (n as f64 * h.ln() + m * x.abs().powf(1.0 / alpha) - alpha * log_fact[n]).exp()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum GrowthClass {
    Tempered,
    Ultra { alpha: f64 },
}

/// A functional `F` represented by `b_n = F(h_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFunctional {
    pub label: String,
    pub coeffs: CoefficientVector,
    pub growth_class: GrowthClass,
}

impl DistributionFunctional {
    pub fn new(label: impl Into<String>, coeffs: CoefficientVector, growth_class: GrowthClass) -> Self {
        Self {
            label: label.into(),
            coeffs,
            growth_class,
        }
    }

    /// Point evaluation at zero: `b_n = h_n(0)`.
    pub fn delta(len: usize) -> Self {
        let coeffs = CoefficientVector::new(hermite_values_at_zero(len)).expect("finite values");
        Self::new("delta", coeffs, GrowthClass::Tempered)
    }

    /// `f -> <f, h_index>`.
    pub fn coordinate(len: usize, index: usize) -> Result<Self> {
        Ok(Self::new(
            format!("coordinate_{index}"),
            CoefficientVector::unit(len, index)?,
            GrowthClass::Tempered,
        ))
    }

    /// Regular distribution `f -> ∫ f g`.
    pub fn regular<G>(ctx: &HermiteContext, label: impl Into<String>, g: G, len: usize) -> Result<Self>
    where
        G: Fn(f64) -> f64,
    {
        Ok(Self::new(label, ctx.hermite_coefficients(g, len)?, GrowthClass::Tempered))
    }
}

/// Partial sums of a pairing over a truncation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub ladder: Vec<usize>,
    pub partial_sums: Vec<f64>,
    /// `|S_j - S_{j-1}|` for consecutive ladder steps.
    pub residuals: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub divergent: bool,
}

pub(crate) fn validate_ladder(ladder: &[usize]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::Empty("truncation ladder"));
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) || ladder[0] == 0 {
        return Err(Error::Config(format!("ladder must be positive and strictly increasing: {ladder:?}")));
    }
    Ok(())
}

/// Convergence tolerance relative to `1 + |value|`.
pub const PAIRING_TOL: f64 = 1e-10;

pub(crate) fn ladder_sums(terms: &[f64], ladder: &[usize]) -> PairingReport {
    let mut partial_sums = Vec::with_capacity(ladder.len());
    let mut acc = 0.0;
    let mut done = 0;
    for &n in ladder {
        let end = n.min(terms.len());
        if end > done {
            acc += terms[done..end].iter().sum::<f64>();
            done = end;
        }
        partial_sums.push(acc);
    }
    let residuals: Vec<f64> = partial_sums.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let value = acc;
    let tol = PAIRING_TOL * (1.0 + value.abs());
    let converged = residuals.last().is_some_and(|r| *r <= tol);
    let divergent = match residuals.as_slice() {
        [.., a, b] => *b > *a && *b > tol,
        _ => false,
    };
    PairingReport {
        ladder: ladder.to_vec(),
        partial_sums,
        residuals,
        value,
        converged,
        divergent,
    }
}

/// `F(f) = sum_n <f, h_n> b_n`, summed over the ladder.
pub fn pair(functional: &DistributionFunctional, f: &TestFunction, ladder: &[usize]) -> Result<PairingReport> {
    validate_ladder(ladder)?;
    let c = f.coefficients()?;
    let terms: Vec<f64> = c
        .values()
        .iter()
        .zip(functional.coeffs.values())
        .map(|(a, b)| a * b)
        .collect();
    Ok(ladder_sums(&terms, ladder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspaces::relative_change;
    use std::f64::consts::PI;

    fn h0(len: usize) -> TestFunction {
        TestFunction::from_coefficients("h0", CoefficientVector::unit(len, 0).unwrap(), FunctionClass::Schwartz)
    }

    #[test]
    fn schwartz_h0_grade_zero() {
        let ctx = HermiteContext::new(32).unwrap();
        let s = schwartz_seminorm(&ctx, &h0(8), 0).unwrap();
        assert!((s.value - PI.powf(-0.25)).abs() < 1e-14);
        assert_eq!(s.argmax_x, 0.0);
        let doubled = schwartz_seminorm(&ctx, &h0(8).scaled(2.0).unwrap(), 3).unwrap();
        let single = schwartz_seminorm(&ctx, &h0(8), 3).unwrap();
        assert!((doubled.value - 2.0 * single.value).abs() < 1e-14);
    }

    #[test]
    fn schwartz_h0_grade_one_against_fine_grid() {
        let ctx = HermiteContext::new(32).unwrap();
        let s = schwartz_seminorm(&ctx, &h0(8), 1).unwrap();
        // analytic h_0 and h_0' = -x h_0 sampled at step 1e-3
        let mut oracle: f64 = 0.0;
        for i in -20000..=20000 {
            let x = i as f64 * 1e-3;
            let h = PI.powf(-0.25) * (-x * x / 2.0).exp();
            let w = (1.0 + x * x).sqrt();
            oracle = oracle.max(h.abs() * w).max((x * h).abs() * w);
        }
        assert!((s.value - oracle).abs() < 1e-4, "{} vs {oracle}", s.value);
    }

    #[test]
    fn schwartz_truncation_error() {
        let ctx = HermiteContext::new(10).unwrap();
        assert!(matches!(schwartz_seminorm(&ctx, &h0(8), 4), Err(Error::Truncation(_))));
        let closure = TestFunction::from_closure("g", |x: f64| (-x * x).exp(), FunctionClass::Schwartz);
        assert!(schwartz_seminorm(&ctx, &closure, 0).is_err());
    }

    #[test]
    fn gevrey_h0_stable_in_order() {
        let ctx = HermiteContext::new(40).unwrap();
        let f = h0(16);
        let g8 = gevrey_seminorm(&ctx, &f, 1.0, 1.0, 1.0, 8).unwrap();
        let g12 = gevrey_seminorm(&ctx, &f, 1.0, 1.0, 1.0, 12).unwrap();
        assert!(g8.value.is_finite() && g8.value > 0.0);
        assert!(relative_change(g8.value, g12.value) <= 0.02);
        let g_more = gevrey_seminorm(&ctx, &f, 1.0, 2.0, 1.0, 8).unwrap();
        assert!(g_more.value >= g8.value);
        assert!(gevrey_seminorm(&ctx, &f, 1.0, 1.0, 1.0, 13).is_err());
        assert!(gevrey_seminorm(&ctx, &f, 1.0, 1.0, 0.5, 4).is_err());
    }

    #[test]
    fn delta_pairings() {
        let ctx = HermiteContext::new(64).unwrap();
        let delta = DistributionFunctional::delta(64);
        let r = pair(&delta, &h0(64), &[1, 2, 4, 8]).unwrap();
        assert!((r.value - PI.powf(-0.25)).abs() < 1e-15);
        assert!(r.converged && !r.divergent);

        let c = CoefficientVector::new(vec![0.3, -1.0, 0.25, 0.0, 2.0, 0.0, -0.5]).unwrap();
        let f = TestFunction::from_coefficients("c", c.clone(), FunctionClass::Schwartz);
        let r = pair(&delta, &f, &[7, 16]).unwrap();
        let direct = ctx.synthesize(&c).unwrap().eval(0.0).unwrap();
        assert!((r.value - direct).abs() < 1e-15);

        let coord = DistributionFunctional::coordinate(64, 5).unwrap();
        let c = CoefficientVector::new((0..10).map(|i| i as f64 * 0.1).collect()).unwrap();
        let f = TestFunction::from_coefficients("ramp", c, FunctionClass::Schwartz);
        assert_eq!(pair(&coord, &f, &[10]).unwrap().value, 0.5);
    }

    #[test]
    fn divergent_pairing_flagged() {
        let b = CoefficientVector::new((0..64).map(|n| (n as f64 + 1.0).powi(2)).collect()).unwrap();
        let growing = DistributionFunctional::new("n^2", b, GrowthClass::Tempered);
        let c = CoefficientVector::new(vec![1.0; 64]).unwrap();
        let f = TestFunction::from_coefficients("ones", c, FunctionClass::None);
        let r = pair(&growing, &f, &[8, 16, 32, 64]).unwrap();
        assert!(r.divergent && !r.converged);
        assert!(pair(&growing, &f, &[8, 8]).is_err());
    }
}
