use hframe::experiment::{CorpusSpec, FrameSpec, LocalizationSpec, PRESETS};
use hframe::genfunc::{CorpusKind, ExpolPattern, ExpolSpec};
use hframe::{preset, run_experiment, ExperimentConfig, WeightKind};
use proptest::prelude::*;
use std::fs;

fn frame_spec() -> impl Strategy<Value = FrameSpec> {
    let pattern = prop_oneof![
        Just(ExpolPattern::Constant),
        Just(ExpolPattern::Alternating),
        any::<u64>().prop_map(|seed| ExpolPattern::Random { seed }),
    ];
    prop_oneof![
        Just(FrameSpec::Identity),
        (prop::collection::vec(0.0f64..0.3, 1..=3), pattern)
            .prop_map(|(eps, pattern)| FrameSpec::Expol(ExpolSpec { eps, pattern })),
        "[a-z]{1,8}\\.frmx".prop_map(|p| FrameSpec::Matrix { path: p.into() }),
    ]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        "[a-z_]{1,12}",
        prop::collection::btree_set(16usize..1024, 1..5).prop_map(|s| s.into_iter().collect::<Vec<_>>()),
        frame_spec(),
        prop_oneof![Just(WeightKind::Polynomial), (0.05f64..0.95).prop_map(|beta| WeightKind::SubExponential { beta })],
        0usize..8,
        prop::collection::vec(0.5f64..10.0, 0..4),
        prop_oneof![Just(CorpusKind::Schwartz), Just(CorpusKind::Gevrey { alpha: 1.0 })],
        (any::<bool>(), 0usize..40, any::<bool>(), any::<u64>()),
    )
        .prop_map(|(name, ladder, frame, weights, max_grade, orders, class, (selfloc, trials, stab, seed))| {
            ExperimentConfig {
                name,
                ladder,
                frame,
                weights,
                max_grade,
                localization: LocalizationSpec {
                    polynomial_orders: orders.clone(),
                    exponential_rates: orders,
                    cap: 1e6,
                },
                corpus: CorpusSpec::Standard { class },
                functionals: Vec::new(),
                self_localization: selfloc,
                permutation_trials: trials,
                require_stability: stab,
                informational_gates: Vec::new(),
                output_dir: "out".into(),
                seed,
            }
        })
}

proptest! {
    #[test]
    fn config_survives_json(c in config()) {
        let text = c.to_json().unwrap();
        prop_assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    }
}

#[test]
fn presets_validate() {
    for name in PRESETS {
        preset(name).unwrap().validate().unwrap();
    }
}

#[test]
fn reports_are_reproducible() {
    let mut c = preset("bounds_ladder").unwrap();
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            c.output_dir = dir.path().to_path_buf();
            let out = run_experiment(&c).unwrap();
            assert_eq!(out.exit_code(), 0);
            (fs::read(out.report_path.unwrap()).unwrap(), fs::read(out.csv_path.unwrap()).unwrap())
        })
        .collect();
    assert!(runs[0] == runs[1]);
}
