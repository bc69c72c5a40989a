mod common;

use hframe::genfunc::{
    corpus_standard, decay_matches, frame_pair, gevrey_seminorm, pair, schwartz_seminorm, verify_expansion_theorem,
    CorpusKind, DistributionFunctional, ExpolSpec, FunctionClass, GrowthClass, TestFunction,
};
use hframe::seqspaces::classify_decay;
use hframe::{CoefficientVector, DecayModel, WeightFamily};
use proptest::prelude::*;

const LADDER: [usize; 3] = [16, 32, 64];

fn coeff_fn(label: &str, values: Vec<f64>) -> TestFunction {
    TestFunction::from_coefficients(label, CoefficientVector::new(values).unwrap(), FunctionClass::Schwartz)
}

fn functional(values: Vec<f64>) -> DistributionFunctional {
    DistributionFunctional::new("b", CoefficientVector::new(values).unwrap(), GrowthClass::Tempered)
}

fn sum(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pairing_is_bilinear(
        f in prop::collection::vec(-1.0f64..1.0, 64),
        g in prop::collection::vec(-1.0f64..1.0, 64),
        b in prop::collection::vec(-10.0f64..10.0, 64),
        c in prop::collection::vec(-10.0f64..10.0, 64),
        s in -3.0f64..3.0,
    ) {
        let v = |b: &[f64], f: &[f64]| pair(&functional(b.to_vec()), &coeff_fn("f", f.to_vec()), &LADDER).unwrap().value;
        let left = v(&b, &sum(&f, &g, s));
        prop_assert!((left - v(&b, &f) - s * v(&b, &g)).abs() <= 1e-12 * (1.0 + left.abs()));
        let right = v(&sum(&b, &c, s), &f);
        prop_assert!((right - v(&b, &f) - s * v(&c, &f)).abs() <= 1e-12 * (1.0 + right.abs()));
    }

    #[test]
    fn seminorms_are_homogeneous_and_subadditive(
        f in prop::collection::vec(-1.0f64..1.0, 12),
        g in prop::collection::vec(-1.0f64..1.0, 12),
        s in -4.0f64..4.0,
        k in 0usize..4,
    ) {
        let ctx = common::ctx(64);
        let (ff, gg) = (coeff_fn("f", f.clone()), coeff_fn("g", g.clone()));
        let fg = coeff_fn("f+g", sum(&f, &g, 1.0));
        let sch = |t: &TestFunction| schwartz_seminorm(ctx, t, k).unwrap().value;
        let gev = |t: &TestFunction| gevrey_seminorm(ctx, t, 1.0, 1.0, 1.5, 6).unwrap().value;
        for norm in [&sch as &dyn Fn(&TestFunction) -> f64, &gev] {
            let scaled = norm(&ff.scaled(s).unwrap());
            prop_assert!((scaled - s.abs() * norm(&ff)).abs() <= 1e-10 * (1.0 + scaled));
            prop_assert!(norm(&fg) <= norm(&ff) + norm(&gg) + 1e-10);
        }
    }

    #[test]
    fn delta_reproduces_point_value(f in prop::collection::vec(-1.0f64..1.0, 1..=16)) {
        let ctx = common::ctx(64);
        let c = CoefficientVector::new(f).unwrap().resized(64);
        let at_zero = ctx.synthesize(&c).unwrap().eval(0.0).unwrap();
        let r = pair(&DistributionFunctional::delta(64), &coeff_fn("f", c.values().to_vec()), &LADDER).unwrap();
        prop_assert!((r.value - at_zero).abs() <= 1e-13);
        prop_assert!(r.converged);
    }
}

#[test]
fn regular_distributions_embed_consistently() {
    let ctx = common::ctx(128);
    let g = |x: f64| (1.0 + x) * (-x * x / 3.0).exp();
    let f = |x: f64| x * x * (-x * x).exp();
    let functional = DistributionFunctional::regular(ctx, "g", g, 128).unwrap();
    let tf = TestFunction::from_closure("f", f, FunctionClass::Schwartz).ingest(ctx, 128).unwrap();
    let value = pair(&functional, &tf, &[32, 64, 128]).unwrap().value;
    let inner: f64 = ctx.quad_nodes().iter().zip(ctx.quad_weights()).map(|(x, w)| w * f(*x) * g(*x)).sum();
    assert!((value - inner).abs() <= 1e-10, "{value} vs {inner}");
}

#[test]
fn frame_pairings_agree_on_expol_family() {
    let ctx = common::ctx(64);
    let corpus = corpus_standard(CorpusKind::Schwartz, ctx, 64).unwrap();
    let delta = DistributionFunctional::delta(64);
    for eps in [vec![0.3], vec![0.2, 0.1], vec![0.3, 0.2, 0.1]] {
        let frame = ExpolSpec::constant(eps).build(64).unwrap().system;
        for f in &corpus {
            let r = frame_pair(&delta, &frame, f, &LADDER).unwrap();
            let hermite = pair(&delta, f, &LADDER).unwrap().value;
            assert!((r.reference - hermite).abs() <= 1e-14);
            assert!(r.error_dual_analysis <= 1e-8 && r.error_dual_synthesis <= 1e-8, "{}: {r:?}", f.label);
            assert!(r.mutual_difference <= 1e-8);
            assert!(r.localization_warning.is_none());
        }
    }
}

#[test]
fn decay_class_transfers_on_expol_example() {
    let ctx = common::ctx(256);
    let frame = ExpolSpec::constant(vec![0.2, 0.1]).build(256).unwrap().system;
    let corpus: Vec<TestFunction> = [
        ("h0", Box::new(|x: f64| (-x * x / 2.0).exp()) as Box<dyn Fn(f64) -> f64 + Send + Sync>),
        ("x_gauss", Box::new(|x: f64| x * (-x * x / 2.0).exp())),
        ("gauss_1", Box::new(|x: f64| (-x * x).exp())),
        ("poly_gauss", Box::new(|x: f64| (1.0 + x * x) * (-x * x / 2.0).exp())),
    ]
    .into_iter()
    .map(|(label, f)| {
        TestFunction::from_closure(label, f, FunctionClass::Schwartz)
            .ingest(ctx, 256)
            .unwrap()
    })
    .collect();
    for f in &corpus {
        let c = f.coefficients().unwrap().values();
        let hermite = classify_decay(c).unwrap();
        let frame_side = classify_decay(&frame.analyze(c).unwrap()).unwrap();
        assert_eq!(hermite.model, frame_side.model, "{}", f.label);
        assert!(decay_matches(&hermite, &frame_side, 256.0), "{}: {hermite:?} {frame_side:?}", f.label);
        if !hermite.finitely_supported() {
            assert_eq!(hermite.model, DecayModel::Exponential);
            assert!((hermite.rate - frame_side.rate).abs() <= 0.2 * hermite.rate);
        }
    }
}

#[test]
fn seminorm_grows_with_exponential_weight() {
    let ctx = common::ctx(64);
    let f = coeff_fn("h0", vec![1.0]);
    let values: Vec<f64> = [0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|m| gevrey_seminorm(ctx, &f, 1.0, *m, 1.0, 8).unwrap().value)
        .collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
}

#[test]
fn expansion_constants_are_stable_on_expol() {
    let ctx = common::ctx(256);
    let corpus = corpus_standard(CorpusKind::Schwartz, ctx, 256).unwrap();
    let fam = WeightFamily::polynomial(4);
    let spec = ExpolSpec::constant(vec![0.2, 0.1]);
    let rep = verify_expansion_theorem(|m| Ok(spec.build(m)?.system), &corpus, &fam, 4, &[64, 128, 256]).unwrap();
    assert!(rep.max_span_error <= 1e-8);
    for g in &rep.constants {
        assert!(g.stable, "{g:?}");
    }
    assert!(rep.transfer_ok);
}
