//! Configured verification runs: frame construction, bounds, localization,
//! duals, expansions and pairings over a truncation ladder, with gated
//! pass/fail results and deterministic report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FBoundednessTable, FrameBounds, FrameSystem, PermutationProbe, RieszDiagnostics, RECONSTRUCTION_TOL};
use crate::genfunc::{
    bump, compact_coefficients, corpus_standard, frame_pair, verify_expansion_theorem, CorpusKind, CsvRow, DistributionFunctional, ExpansionReport,
    ExpolSpec, FramePairReport, FunctionClass, GrowthClass, TestFunction,
};
use crate::hermite::{CoefficientVector, HermiteContext};
use crate::localization::{
    check_exponential_localization, check_polynomial_localization, check_self_localization, ladder_stability, CrossGram,
    LocalizationKind, LocalizationReport, OrderStability, DEFAULT_CAP,
};
use crate::matrix_io::read_frame;
use crate::seqspaces::{WeightFamily, WeightKind};

/// Environment variable read by [`configure_threads`].
pub const THREADS_ENV: &str = "HFRAME_THREADS";

/// Biorthogonality and dual-equation tolerance.
pub const DUAL_TOL: f64 = 1e-10;

/// Agreement required between the two expansion orders.
pub const MUTUAL_TOL: f64 = 1e-10;

/// Pairing tolerance relative to `max(1, |reference|)`.
pub const PAIRING_GATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FrameSpec {
    Identity,
    Expol(ExpolSpec),
    /// Matrix file truncated to each ladder size.
    Matrix { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSpec {
    pub polynomial_orders: Vec<f64>,
    pub exponential_rates: Vec<f64>,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_CAP
}

impl Default for LocalizationSpec {
    fn default() -> Self {
        Self {
            polynomial_orders: vec![1.0, 2.0, 4.0, 8.0],
            exponential_rates: vec![0.5, 1.0, 2.0],
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusSpec {
    Standard { class: CorpusKind },
    Manifest { path: PathBuf },
}

/// A test function or functional in a manifest or config.
///
/// Function kinds: `hermite {index}`, `gaussian {a}`, `poly_gaussian`, `bump`,
/// `coefficients {values}` or `coefficients` with `coeff_file`.
/// Functional kinds: `delta`, `coordinate {index}`, `gaussian {a}` (the
/// regular distribution of `exp(-a x^2)`), `coefficients`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub label: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff_file: Option<PathBuf>,
}

impl SourceEntry {
    pub fn new(label: impl Into<String>, kind: &str, params: serde_json::Value) -> Self {
        Self {
            label: label.into(),
            kind: kind.into(),
            params,
            coeff_file: None,
        }
    }

    fn param(&self, name: &str) -> Result<&serde_json::Value> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("'{}' ({}) needs parameter '{name}'", self.label, self.kind)))
    }

    fn f64_param(&self, name: &str) -> Result<f64> {
        self.param(name)?
            .as_f64()
            .ok_or_else(|| Error::Config(format!("'{}': parameter '{name}' must be a number", self.label)))
    }

    fn index_param(&self) -> Result<usize> {
        self.param("index")?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| Error::Config(format!("'{}': parameter 'index' must be a non-negative integer", self.label)))
    }

    fn coefficients(&self, base: &Path) -> Result<CoefficientVector> {
        let values: Vec<f64> = match (&self.coeff_file, self.params.get("values")) {
            (Some(p), _) => serde_json::from_str(&fs::read_to_string(base.join(p))?)?,
            (None, Some(v)) => serde_json::from_value(v.clone())?,
            (None, None) => {
                return Err(Error::Config(format!("'{}' needs 'coeff_file' or params.values", self.label)));
            }
        };
        CoefficientVector::new(values)
    }

    fn positive_width(&self) -> Result<f64> {
        let a = self.f64_param("a")?;
        if !(a > 0.0) {
            return Err(Error::Config(format!("'{}': gaussian width a must be positive", self.label)));
        }
        Ok(a)
    }

    pub fn to_function(&self, ctx: &HermiteContext, count: usize, class: FunctionClass, base: &Path) -> Result<TestFunction> {
        let label = self.label.clone();
        let f = match self.kind.as_str() {
            "hermite" => TestFunction::from_coefficients(label, CoefficientVector::unit(count, self.index_param()?)?, class),
            "gaussian" => {
                let a = self.positive_width()?;
                TestFunction::from_closure(label, move |x: f64| (-a * x * x).exp(), class)
            }
            "poly_gaussian" => TestFunction::from_closure(label, |x: f64| (1.0 + x * x) * (-x * x / 2.0).exp(), class),
            "bump" => TestFunction::from_coefficients(label, compact_coefficients(bump, count)?, FunctionClass::Schwartz),
            "coefficients" => TestFunction::from_coefficients(label, self.coefficients(base)?, class),
            other => return Err(Error::Config(format!("unknown test function kind '{other}'"))),
        };
        f.ingest(ctx, count)
    }

    pub fn to_functional(&self, ctx: &HermiteContext, count: usize, base: &Path) -> Result<DistributionFunctional> {
        let mut out = match self.kind.as_str() {
            "delta" => DistributionFunctional::delta(count),
            "coordinate" => DistributionFunctional::coordinate(count, self.index_param()?)?,
            "gaussian" => {
                let a = self.positive_width()?;
                DistributionFunctional::regular(ctx, "", move |x| (-a * x * x).exp(), count)?
            }
            "coefficients" => DistributionFunctional::new("", self.coefficients(base)?.resized(count), GrowthClass::Tempered),
            other => return Err(Error::Config(format!("unknown functional kind '{other}'"))),
        };
        out.label = self.label.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub functions: Vec<SourceEntry>,
    #[serde(default)]
    pub functionals: Vec<SourceEntry>,
    #[serde(default)]
    pub class: Option<FunctionClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub ladder: Vec<usize>,
    pub frame: FrameSpec,
    pub weights: WeightKind,
    pub max_grade: usize,
    #[serde(default)]
    pub localization: LocalizationSpec,
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub functionals: Vec<SourceEntry>,
    #[serde(default)]
    pub self_localization: bool,
    #[serde(default = "default_permutation_trials")]
    pub permutation_trials: usize,
    /// Gate on ladder stability of dual localization constants and frame constants.
    #[serde(default = "default_true")]
    pub require_stability: bool,
    /// Gates that are evaluated and reported but do not decide the exit status.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub informational_gates: Vec<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

fn default_permutation_trials() -> usize {
    20
}

fn default_true() -> bool {
    true
}

pub const PRESETS: [&str; 4] = ["prophb", "prophb2", "riesz_selfloc", "bounds_ladder"];

fn standard_functionals() -> Vec<SourceEntry> {
    vec![
        SourceEntry::new("delta", "delta", serde_json::Value::Null),
        SourceEntry::new("coordinate_0", "coordinate", serde_json::json!({"index": 0})),
        SourceEntry::new("coordinate_5", "coordinate", serde_json::json!({"index": 5})),
        SourceEntry::new("gaussian_1", "gaussian", serde_json::json!({"a": 1.0})),
    ]
}

/// Canned configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let expol = ExpolSpec {
        eps: vec![0.3, 0.2],
        pattern: crate::genfunc::ExpolPattern::Alternating,
    };
    let base = ExperimentConfig {
        name: name.to_string(),
        ladder: vec![128, 256, 512],
        frame: FrameSpec::Expol(expol),
        weights: WeightKind::Polynomial,
        max_grade: 4,
        localization: LocalizationSpec::default(),
        corpus: CorpusSpec::Standard {
            class: CorpusKind::Schwartz,
        },
        functionals: standard_functionals(),
        self_localization: false,
        permutation_trials: 20,
        require_stability: true,
        informational_gates: Vec::new(),
        output_dir: PathBuf::from(format!("out/{name}")),
        seed: 20240601,
    };
    match name {
        "prophb" => Ok(base),
        "prophb2" => {
            let alpha = 1.0;
            Ok(ExperimentConfig {
                weights: WeightKind::SubExponential { beta: 1.0 / (2.0 * alpha) },
                corpus: CorpusSpec::Standard {
                    class: CorpusKind::Gevrey { alpha },
                },
                ..base
            })
        }
        "riesz_selfloc" => Ok(ExperimentConfig {
            frame: FrameSpec::Expol(ExpolSpec {
                eps: vec![0.25, 0.15, 0.1],
                pattern: crate::genfunc::ExpolPattern::Random { seed: 17 },
            }),
            self_localization: true,
            // random products decay like exp(-cn + O(sqrt n)), which the fits cannot pin to one model
            informational_gates: vec!["decay_transfer".into()],
            ..base
        }),
        "bounds_ladder" => Ok(ExperimentConfig {
            ladder: vec![64, 128, 256],
            frame: FrameSpec::Expol(ExpolSpec::constant(vec![0.4])),
            ..base
        }),
        other => Err(Error::Config(format!("unknown preset '{other}' (expected one of {})", PRESETS.join(", ")))),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let FrameSpec::Matrix { path } = &mut self.frame {
            fix(path);
        }
        if let CorpusSpec::Manifest { path } = &mut self.corpus {
            fix(path);
        }
        for f in &mut self.functionals {
            if let Some(p) = &mut f.coeff_file {
                fix(p);
            }
        }
    }

    pub fn weight_family(&self) -> Result<WeightFamily> {
        match self.weights {
            WeightKind::Polynomial => Ok(WeightFamily::polynomial(self.max_grade)),
            WeightKind::SubExponential { beta } => WeightFamily::sub_exponential(beta, self.max_grade),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() || self.ladder[0] == 0 || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("ladder must be positive and strictly increasing: {:?}", self.ladder)));
        }
        if self.ladder[0] < crate::seqspaces::MIN_CLASSIFY_LEN {
            return Err(Error::Config(format!(
                "smallest truncation must be at least {}",
                crate::seqspaces::MIN_CLASSIFY_LEN
            )));
        }
        self.weight_family()?;
        let loc = &self.localization;
        if loc.polynomial_orders.iter().chain(&loc.exponential_rates).any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("localization orders must be finite and non-negative".into()));
        }
        if !(loc.cap > 0.0) {
            return Err(Error::Config("localization cap must be positive".into()));
        }
        if let Some(g) = self.informational_gates.iter().find(|g| !GATES.contains(&g.as_str())) {
            return Err(Error::Config(format!("unknown gate '{g}'")));
        }
        if let FrameSpec::Expol(spec) = &self.frame {
            // hypothesis violations are configuration errors
            spec.build(self.ladder[0])?;
        }
        Ok(())
    }

    fn frame_at(&self, m: usize, source: Option<&FrameSystem>) -> Result<FrameSystem> {
        match (&self.frame, source) {
            (FrameSpec::Identity, _) => FrameSystem::identity(m),
            (FrameSpec::Expol(spec), _) => Ok(spec.build(m)?.system),
            (FrameSpec::Matrix { .. }, Some(src)) => src.truncated(m),
            (FrameSpec::Matrix { path }, None) => read_frame(path)?.truncated(m),
        }
    }
}

/// Installs a global thread pool of `HFRAME_THREADS` workers, when set.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    if n == 0 {
        return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
    }
    // a pool installed earlier in the process wins; that is not an error
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Gate names, in evaluation order.
pub const GATES: [&str; 13] = [
    "frame_bounds",
    "localization",
    "expol_envelope",
    "canonical_dual",
    "dual_localization_stability",
    "self_localization",
    "reconstruction",
    "decay_transfer",
    "fframe_constants",
    "fframe_stability",
    "unconditionality",
    "pairing",
    "numerical_error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_name: String,
    pub version: String,
    pub tolerances: BTreeMap<String, f64>,
}

impl Provenance {
    fn current() -> Self {
        let tolerances = [
            ("rank", crate::frame::RANK_TOL),
            ("reconstruction", RECONSTRUCTION_TOL),
            ("mutual_difference", MUTUAL_TOL),
            ("dual", DUAL_TOL),
            ("pairing", PAIRING_GATE_TOL),
            ("pairing_convergence", crate::genfunc::PAIRING_TOL),
            ("rate_agreement", crate::genfunc::RATE_AGREEMENT),
            ("constant_stability", crate::genfunc::CONSTANT_STABILITY),
            ("localization_stability", crate::localization::LADDER_STABILITY),
            ("decay_noise_floor", crate::seqspaces::NOISE_FLOOR),
        ];
        Self {
            crate_name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            tolerances: tolerances.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderFrameReport {
    pub truncation: usize,
    pub elements: usize,
    pub riesz: RieszDiagnostics,
    pub bounds: FrameBounds,
    pub frame_polynomial: LocalizationReport,
    pub frame_exponential: LocalizationReport,
    pub dual_polynomial: LocalizationReport,
    pub dual_exponential: LocalizationReport,
    /// `max |D S - C|` relative to `max |C|`
    pub dual_equation_residual: f64,
    /// `max |C D^T - I|` on Riesz systems
    pub biorthogonality: Option<f64>,
    pub operator_norms: FBoundednessTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLocalization {
    pub polynomial: LocalizationReport,
    pub exponential: LocalizationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedProbe {
    pub function: String,
    pub probe: PermutationProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    /// The configuration, without its output directory.
    pub config: serde_json::Value,
    pub frames: Vec<LadderFrameReport>,
    pub dual_stability: Vec<OrderStability>,
    pub self_localization: Option<SelfLocalization>,
    pub expansion: Option<ExpansionReport>,
    pub permutation: Vec<NamedProbe>,
    pub pairings: Vec<FramePairReport>,
    pub gates: Vec<Gate>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn failing_gates(&self) -> Vec<&Gate> {
        self.gates.iter().filter(|g| !g.passed && !g.informational).collect()
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        let mut push = |label: &str, grade: Option<usize>, truncation: usize, metric: String, value: f64| {
            rows.push(CsvRow {
                label: label.into(),
                grade,
                truncation: Some(truncation),
                metric,
                value,
            })
        };
        for f in &self.frames {
            let t = f.truncation;
            push("frame", None, t, "lower_bound".into(), f.bounds.lower);
            push("frame", None, t, "upper_bound".into(), f.bounds.upper);
            for (side, reps) in [
                ("frame", [&f.frame_polynomial, &f.frame_exponential]),
                ("dual", [&f.dual_polynomial, &f.dual_exponential]),
            ] {
                for rep in reps {
                    let tag = match rep.kind {
                        LocalizationKind::Polynomial => "poly",
                        LocalizationKind::Exponential => "exp",
                    };
                    for o in &rep.orders {
                        push(side, None, t, format!("{tag}_constant_s={}", o.order), o.constant);
                    }
                }
            }
            for g in &f.operator_norms.grades {
                push("frame", Some(g.grade), t, "norm_analysis".into(), g.analysis.estimate);
                push("frame", Some(g.grade), t, "norm_synthesis".into(), g.synthesis.estimate);
                push("frame", Some(g.grade), t, "norm_frame_operator".into(), g.frame_operator.estimate);
            }
        }
        let top = self.frames.last().map_or(0, |f| f.truncation);
        for p in &self.pairings {
            let label = format!("{}|{}", p.functional, p.function);
            push(&label, None, top, "pair_error_dual_analysis".into(), p.error_dual_analysis);
            push(&label, None, top, "pair_error_dual_synthesis".into(), p.error_dual_synthesis);
        }
        if let Some(e) = &self.expansion {
            rows.extend(e.csv_rows());
        }
        rows
    }
}

/// Report plus the process exit status it implies.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub report_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
}

impl ExperimentOutcome {
    /// `0` when every gate passed, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            1
        }
    }
}

/// Exit status for an error returned by [`run_experiment`]: `2` for
/// configuration and input problems, `1` for numerical failures.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Hypothesis { .. } | Error::Io(_) | Error::Json(_) | Error::MatrixFormat(_) => 2,
        _ => 1,
    }
}

fn max_abs(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn gate(gates: &mut Vec<Gate>, name: &str, passed: bool, detail: String) {
    gates.push(Gate {
        name: name.into(),
        passed,
        detail,
        informational: false,
    });
}

fn load_inputs(
    config: &ExperimentConfig,
    ctx: &HermiteContext,
    count: usize,
) -> Result<(Vec<TestFunction>, Vec<DistributionFunctional>)> {
    let cwd = PathBuf::from(".");
    let mut functionals: Vec<DistributionFunctional> = config
        .functionals
        .iter()
        .map(|e| e.to_functional(ctx, count, &cwd))
        .collect::<Result<_>>()?;
    let corpus = match &config.corpus {
        CorpusSpec::Standard { class } => corpus_standard(*class, ctx, count)?,
        CorpusSpec::Manifest { path } => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or(cwd);
            let class = manifest.class.unwrap_or(FunctionClass::Schwartz);
            for e in &manifest.functionals {
                functionals.push(e.to_functional(ctx, count, &base)?);
            }
            manifest
                .functions
                .iter()
                .map(|e| e.to_function(ctx, count, class, &base))
                .collect::<Result<_>>()?
        }
    };
    if corpus.is_empty() {
        return Err(Error::Config("corpus is empty".into()));
    }
    Ok((corpus, functionals))
}

fn ladder_frame(config: &ExperimentConfig, frame: &FrameSystem, family: &WeightFamily) -> Result<LadderFrameReport> {
    let loc = &config.localization;
    let riesz = frame.is_riesz_basis();
    let bounds = frame.frame_bounds()?;
    let c = frame.coeffs();
    let d = frame.dual_coeffs()?;
    // against the Hermite basis, which is its own dual
    let frame_x = CrossGram::from_matrices(c.clone(), c.clone())?;
    let dual_x = CrossGram::from_matrices(d.clone(), d.clone())?;
    let dual_equation_residual = max_abs(&(d * frame.frame_matrix() - c)) / max_abs(c);
    let biorthogonality = riesz.is_riesz_basis.then(|| {
        let n = frame.elements();
        max_abs(&(c * d.transpose() - nalgebra::DMatrix::<f64>::identity(n, n)))
    });
    Ok(LadderFrameReport {
        truncation: frame.dimension(),
        elements: frame.elements(),
        riesz,
        bounds,
        frame_polynomial: check_polynomial_localization(&frame_x, &loc.polynomial_orders, loc.cap),
        frame_exponential: check_exponential_localization(&frame_x, &loc.exponential_rates, loc.cap),
        dual_polynomial: check_polynomial_localization(&dual_x, &loc.polynomial_orders, loc.cap),
        dual_exponential: check_exponential_localization(&dual_x, &loc.exponential_rates, loc.cap),
        dual_equation_residual,
        biorthogonality,
        operator_norms: frame.graded_operator_norms(family, config.max_grade, config.seed)?,
    })
}

/// Runs the configured pipeline and writes `report.json` and `summary.csv`
/// into the output directory.
///
/// Configuration and input errors are returned as `Err` (see
/// [`error_exit_code`]); numerical failures are recorded as failing gates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let report = evaluate(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let report_path = config.output_dir.join("report.json");
    let csv_path = config.output_dir.join("summary.csv");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    write_csv(&csv_path, &report.csv_rows())?;
    Ok(ExperimentOutcome {
        report,
        report_path: Some(report_path),
        csv_path: Some(csv_path),
    })
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(["label", "grade", "truncation", "metric", "value"]).map_err(csv_err)?;
    for r in rows {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([r.label.clone(), opt(r.grade), opt(r.truncation), r.metric.clone(), format!("{:e}", r.value)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// The pipeline without file output.
pub fn evaluate(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let family = config.weight_family()?;
    let top = *config.ladder.last().expect("validated ladder");

    // construction: every failure here is an input problem
    let source = match &config.frame {
        FrameSpec::Matrix { path } => {
            let f = read_frame(path).map_err(|e| match e {
                Error::Io(_) | Error::Json(_) | Error::MatrixFormat(_) => e,
                other => Error::Config(format!("{}: {other}", path.display())),
            })?;
            if f.dimension() < top {
                return Err(Error::Config(format!(
                    "matrix has {} Hermite coefficients, ladder reaches {top}",
                    f.dimension()
                )));
            }
            Some(f)
        }
        _ => None,
    };
    let frames: Vec<FrameSystem> = config
        .ladder
        .iter()
        .map(|&m| config.frame_at(m, source.as_ref()))
        .collect::<Result<_>>()?;
    let ctx = HermiteContext::new(top)?;
    let (corpus, functionals) = load_inputs(config, &ctx, top)?;

    let mut config_echo = serde_json::to_value(config)?;
    if let Some(obj) = config_echo.as_object_mut() {
        obj.remove("output_dir");
    }
    let mut report = ExperimentReport {
        provenance: Provenance::current(),
        config: config_echo,
        frames: Vec::new(),
        dual_stability: Vec::new(),
        self_localization: None,
        expansion: None,
        permutation: Vec::new(),
        pairings: Vec::new(),
        gates: Vec::new(),
        passed: false,
    };
    if let Err(e) = run_stages(config, &family, &frames, &corpus, &functionals, &mut report) {
        let stage = report.gates.last().filter(|g| !g.passed).map(|g| g.name.clone());
        if stage.is_none() {
            gate(&mut report.gates, "numerical_error", false, e.to_string());
        }
    }
    for g in &mut report.gates {
        g.informational = config.informational_gates.contains(&g.name);
    }
    report.passed = !report.gates.is_empty() && report.gates.iter().all(|g| g.passed || g.informational);
    Ok(report)
}

fn run_stages(
    config: &ExperimentConfig,
    family: &WeightFamily,
    frames: &[FrameSystem],
    corpus: &[TestFunction],
    functionals: &[DistributionFunctional],
    report: &mut ExperimentReport,
) -> Result<()> {
    let gates = &mut report.gates;
    let top = frames.last().expect("non-empty ladder");

    // bounds, localization, dual
    for frame in frames {
        match ladder_frame(config, frame, family) {
            Ok(r) => report.frames.push(r),
            Err(e) => {
                gate(gates, "frame_bounds", false, format!("M = {}: {e}", frame.dimension()));
                return Err(e);
            }
        }
    }
    let bounds_ok = report.frames.iter().all(|f| f.bounds.lower > 0.0 && f.bounds.upper.is_finite());
    gate(
        gates,
        "frame_bounds",
        bounds_ok,
        report
            .frames
            .iter()
            .map(|f| format!("M={}: A={:e} B={:e}", f.truncation, f.bounds.lower, f.bounds.upper))
            .collect::<Vec<_>>()
            .join("; "),
    );

    let failed_orders = |pick: fn(&LadderFrameReport) -> &LocalizationReport| -> Vec<String> {
        report
            .frames
            .iter()
            .flat_map(|f| {
                pick(f)
                    .orders
                    .iter()
                    .filter(|o| !o.passed)
                    .map(move |o| format!("M={} s={}", f.truncation, o.order))
            })
            .collect()
    };
    let poly_fail = failed_orders(|f| &f.frame_polynomial);
    let exp_fail = failed_orders(|f| &f.frame_exponential);
    gate(
        gates,
        "localization",
        poly_fail.is_empty() && exp_fail.is_empty(),
        if poly_fail.is_empty() && exp_fail.is_empty() {
            format!("all orders under cap {:e}", config.localization.cap)
        } else {
            format!("over cap: {}", poly_fail.into_iter().chain(exp_fail).collect::<Vec<_>>().join(", "))
        },
    );
    if let FrameSpec::Expol(spec) = &config.frame {
        // banded entries bounded by one give C_s <= (1+r)^s and exp(s r)
        let r = spec.r() as f64;
        let slack = 1.0 + 1e-12;
        let ok = report.frames.iter().all(|f| {
            f.frame_polynomial.orders.iter().all(|o| o.constant <= (1.0 + r).powf(o.order) * slack)
                && f.frame_exponential.orders.iter().all(|o| o.constant <= (o.order * r).exp() * slack)
        });
        gate(gates, "expol_envelope", ok, format!("bandwidth r = {}", spec.r()));
    }

    let dual_worst = report.frames.iter().map(|f| f.dual_equation_residual).fold(0.0, f64::max);
    let bio_worst = report.frames.iter().filter_map(|f| f.biorthogonality).fold(0.0, f64::max);
    gate(
        gates,
        "canonical_dual",
        dual_worst <= DUAL_TOL && bio_worst <= DUAL_TOL,
        format!("dual equation {dual_worst:e}, biorthogonality {bio_worst:e}"),
    );

    let dual_reports: Vec<LocalizationReport> = report.frames.iter().map(|f| f.dual_polynomial.clone()).collect();
    report.dual_stability = ladder_stability(&dual_reports);
    if config.require_stability && config.ladder.len() > 1 {
        let unstable: Vec<String> = report
            .dual_stability
            .iter()
            .filter(|s| !s.stable)
            .map(|s| format!("s={} ({:.3})", s.order, s.max_relative_change))
            .collect();
        gate(
            gates,
            "dual_localization_stability",
            unstable.is_empty(),
            if unstable.is_empty() {
                "stable".into()
            } else {
                unstable.join(", ")
            },
        );
    }

    if config.self_localization {
        let loc = &config.localization;
        let sl = SelfLocalization {
            polynomial: check_self_localization(top, LocalizationKind::Polynomial, &loc.polynomial_orders, loc.cap)?,
            exponential: check_self_localization(top, LocalizationKind::Exponential, &loc.exponential_rates, loc.cap)?,
        };
        gate(
            gates,
            "self_localization",
            sl.polynomial.all_passed() && sl.exponential.all_passed(),
            format!(
                "largest passing polynomial order {:?}, exponential {:?}",
                sl.polynomial.largest_passing_order, sl.exponential.largest_passing_order
            ),
        );
        report.self_localization = Some(sl);
    }

    // expansions
    let expansion = match verify_expansion_theorem(
        |m| {
            let i = config.ladder.iter().position(|&x| x == m).expect("ladder member");
            Ok(frames[i].clone())
        },
        corpus,
        family,
        config.max_grade,
        &config.ladder,
    ) {
        Ok(e) => e,
        Err(e) => {
            gate(gates, "reconstruction", false, e.to_string());
            return Err(e);
        }
    };
    gate(
        gates,
        "reconstruction",
        expansion.max_span_error <= RECONSTRUCTION_TOL && expansion.max_mutual_difference <= MUTUAL_TOL,
        format!(
            "max relative error {:e}, max mutual difference {:e}",
            expansion.max_span_error, expansion.max_mutual_difference
        ),
    );
    let mismatched: Vec<String> = expansion
        .functions
        .iter()
        .filter(|f| !(f.decay.frame_matches && f.decay.dual_matches))
        .map(|f| f.label.clone())
        .collect();
    gate(
        gates,
        "decay_transfer",
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "all corpus functions".into()
        } else {
            format!("mismatch: {}", mismatched.join(", "))
        },
    );
    let constants_ok = expansion
        .constants
        .iter()
        .all(|g| g.lower.iter().all(|v| *v > 0.0) && g.upper.iter().all(|v| v.is_finite()));
    gate(gates, "fframe_constants", constants_ok, "A_k > 0 and B_k finite".into());
    if config.require_stability && config.ladder.len() > 1 {
        let unstable: Vec<String> = expansion
            .constants
            .iter()
            .filter(|g| !g.stable)
            .map(|g| format!("k={} ({:.3}, {:.3})", g.grade, g.lower_change, g.upper_change))
            .collect();
        gate(
            gates,
            "fframe_stability",
            unstable.is_empty(),
            if unstable.is_empty() {
                "stable".into()
            } else {
                unstable.join(", ")
            },
        );
    }
    report.expansion = Some(expansion);

    if config.permutation_trials > 0 {
        let m = top.dimension();
        for (i, f) in corpus.iter().enumerate() {
            let fv = f.coefficients()?.resized(m);
            let probe = top.permutation_probe(fv.values(), config.permutation_trials, config.seed.wrapping_add(i as u64))?;
            report.permutation.push(NamedProbe {
                function: f.label.clone(),
                probe,
            });
        }
        let failed: Vec<String> = report
            .permutation
            .iter()
            .filter(|p| p.probe.passed < p.probe.trials)
            .map(|p| format!("{} {}/{}", p.function, p.probe.passed, p.probe.trials))
            .collect();
        gate(
            gates,
            "unconditionality",
            failed.is_empty(),
            if failed.is_empty() {
                format!("{} trials per function", config.permutation_trials)
            } else {
                failed.join(", ")
            },
        );
    }

    for func in functionals {
        for f in corpus {
            report.pairings.push(frame_pair(func, top, f, &config.ladder)?);
        }
    }
    if !functionals.is_empty() {
        let bad: Vec<String> = report
            .pairings
            .iter()
            .filter(|p| {
                let tol = PAIRING_GATE_TOL * p.reference.abs().max(1.0);
                !(p.error_dual_analysis <= tol && p.error_dual_synthesis <= tol)
            })
            .map(|p| format!("{}|{}", p.functional, p.function))
            .collect();
        gate(
            gates,
            "pairing",
            bad.is_empty(),
            if bad.is_empty() {
                format!("{} pairings", report.pairings.len())
            } else {
                format!("off: {}", bad.join(", "))
            },
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            name: "smoke".into(),
            ladder: vec![32, 64],
            frame: FrameSpec::Identity,
            weights: WeightKind::Polynomial,
            max_grade: 2,
            localization: LocalizationSpec::default(),
            corpus: CorpusSpec::Standard {
                class: CorpusKind::Schwartz,
            },
            functionals: standard_functionals(),
            self_localization: true,
            permutation_trials: 4,
            require_stability: true,
            informational_gates: Vec::new(),
            output_dir: dir.to_path_buf(),
            seed: 1,
        }
    }

    #[test]
    fn identity_smoke_passes() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&smoke(dir.path())).unwrap();
        assert_eq!(out.exit_code(), 0, "{:?}", out.report.failing_gates());
        for f in &out.report.frames {
            assert!((f.bounds.lower - 1.0).abs() < 1e-14 && (f.bounds.upper - 1.0).abs() < 1e-14);
        }
        let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(csv.starts_with("label,grade,truncation,metric,value\n"));
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let p = preset(name).unwrap();
            assert_eq!(ExperimentConfig::from_json(&p.to_json().unwrap()).unwrap(), p);
        }
        assert!(preset("nope").is_err());
        assert_eq!(preset("prophb2").unwrap().weights, WeightKind::SubExponential { beta: 0.5 });
        assert_eq!(preset("bounds_ladder").unwrap().ladder, vec![64, 128, 256]);
    }

    #[test]
    fn violated_hypothesis_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = smoke(dir.path());
        c.frame = FrameSpec::Expol(ExpolSpec::constant(vec![0.7, 0.4]));
        let err = run_experiment(&c).unwrap_err();
        assert_eq!(error_exit_code(&err), 2);
        assert!(err.to_string().contains("sum_i eps_i < 1"));
    }

    #[test]
    fn bad_ladder_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = smoke(dir.path());
        c.ladder = vec![64, 32];
        assert_eq!(error_exit_code(&run_experiment(&c).unwrap_err()), 2);
    }

    #[test]
    fn failing_gate_is_named() {
        // a rank-deficient matrix frame: the second element duplicates the first
        let dir = tempfile::tempdir().unwrap();
        let mut data = vec![0.0; 32 * 32];
        for i in 0..32 {
            data[i * 32 + if i == 1 { 0 } else { i }] = 1.0;
        }
        let path = dir.path().join("m.json");
        crate::matrix_io::MatrixFile { n: 32, m: 32, data }
            .write(&path, crate::matrix_io::MatrixFormat::Json)
            .unwrap();
        let mut c = smoke(dir.path());
        c.ladder = vec![32];
        c.frame = FrameSpec::Matrix { path };
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.exit_code(), 1);
        assert!(!out.report.failing_gates().is_empty());
    }

    #[test]
    fn manifest_corpus() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.json"), "[0.5, 0.25, 0.125]").unwrap();
        let manifest = serde_json::json!({
            "functions": [
                {"label": "g", "kind": "gaussian", "params": {"a": 1.5}},
                {"label": "h2", "kind": "hermite", "params": {"index": 2}},
                {"label": "c", "kind": "coefficients", "coeff_file": "c.json"}
            ],
            "functionals": [{"label": "d", "kind": "delta"}]
        });
        let mpath = dir.path().join("manifest.json");
        fs::write(&mpath, manifest.to_string()).unwrap();
        let mut c = smoke(dir.path());
        c.functionals.clear();
        c.corpus = CorpusSpec::Manifest { path: mpath };
        let rep = evaluate(&c).unwrap();
        assert!(rep.passed, "{:?}", rep.failing_gates());
        assert_eq!(rep.expansion.unwrap().functions.len(), 3);
        assert_eq!(rep.pairings.len(), 3);
    }
}
