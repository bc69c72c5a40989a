use serde::{Deserialize, Serialize};

use super::{FunctionClass, TestFunction};
use crate::error::Result;
use crate::hermite::{hermite_values, CoefficientVector, HermiteContext};
use crate::seqspaces::DecayModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusKind {
    Schwartz,
    Gevrey { alpha: f64 },
}

/// Trapezoid points on the support of the bump.
const BUMP_POINTS: usize = 20_001;

/// `exp(-1 / (1 - x^2))` on `(-1, 1)`, zero outside.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Hermite coefficients of a function supported in `[-1, 1]`.
///
/// The integrand vanishes to all orders at the endpoints, where the
/// trapezoid rule converges faster than any power of the step.
pub fn compact_coefficients<F: Fn(f64) -> f64>(f: F, count: usize) -> Result<CoefficientVector> {
    let h = 2.0 / (BUMP_POINTS - 1) as f64;
    let mut acc = vec![0.0; count];
    let mut buf = vec![0.0; count];
    for i in 1..BUMP_POINTS - 1 {
        let x = -1.0 + i as f64 * h;
        let fx = f(x);
        if fx == 0.0 {
            continue;
        }
        hermite_values(x, &mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += h * fx * v;
        }
    }
    CoefficientVector::new(acc)
}

/// The standard test-function corpus with `count` Hermite coefficients each:
/// `h_0 .. h_3`, the Gaussians `exp(-a x^2)` for `a in {1/2, 1, 2}`,
/// `(1 + x^2) exp(-x^2/2)`, and (Schwartz corpus only) a smooth bump.
pub fn corpus_standard(kind: CorpusKind, ctx: &HermiteContext, count: usize) -> Result<Vec<TestFunction>> {
    let class = match kind {
        CorpusKind::Schwartz => FunctionClass::Schwartz,
        CorpusKind::Gevrey { alpha } => FunctionClass::Gevrey { alpha },
    };
    let mut out = Vec::new();
    for n in 0..4 {
        out.push(
            TestFunction::from_coefficients(format!("h{n}"), CoefficientVector::unit(count, n)?, class)
                .with_expected_decay(DecayModel::Exponential, true),
        );
    }
    for (label, a) in [("gauss_0.5", 0.5), ("gauss_1", 1.0), ("gauss_2", 2.0)] {
        let f = TestFunction::from_closure(label, move |x: f64| (-a * x * x).exp(), class);
        // a = 1/2 is a multiple of h_0; other widths decay geometrically
        let finite = a == 0.5;
        out.push(f.ingest(ctx, count)?.with_expected_decay(DecayModel::Exponential, finite));
    }
    let poly = TestFunction::from_closure("poly_gauss", |x: f64| (1.0 + x * x) * (-x * x / 2.0).exp(), class);
    out.push(poly.ingest(ctx, count)?.with_expected_decay(DecayModel::Exponential, true));
    if kind == CorpusKind::Schwartz {
        out.push(TestFunction::from_coefficients(
            "bump",
            compact_coefficients(bump, count)?,
            FunctionClass::Schwartz,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspaces::classify_decay;

    #[test]
    fn corpus_contents() {
        let ctx = HermiteContext::new(128).unwrap();
        let s = corpus_standard(CorpusKind::Schwartz, &ctx, 128).unwrap();
        assert_eq!(s.len(), 9);
        let g = corpus_standard(CorpusKind::Gevrey { alpha: 1.0 }, &ctx, 128).unwrap();
        assert_eq!(g.len(), 8);
        let h0 = s[0].coefficients().unwrap();
        assert_eq!(h0.support_end(), Some(0));
    }

    #[test]
    fn bump_coefficients_match_quadrature_on_low_modes() {
        // low modes are smooth enough for Gauss-Hermite to resolve to ~1e-6
        let ctx = HermiteContext::new(256).unwrap();
        let trap = compact_coefficients(bump, 8).unwrap();
        let gh = ctx.hermite_coefficients(bump, 8).unwrap();
        for (a, b) in trap.values().iter().zip(gh.values()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        // parity: the bump is even
        assert!(trap.values()[1].abs() < 1e-15);
    }

    #[test]
    fn expected_decay_classes() {
        let ctx = HermiteContext::new(128).unwrap();
        let s = corpus_standard(CorpusKind::Schwartz, &ctx, 128).unwrap();
        for f in &s {
            let d = classify_decay(f.coefficients().unwrap().values()).unwrap();
            if let Some(exp) = f.expected_decay {
                assert_eq!(d.model, exp.model, "{}: {d:?}", f.label);
                assert_eq!(d.finitely_supported(), exp.finitely_supported, "{}: {d:?}", f.label);
            }
        }
    }
}
