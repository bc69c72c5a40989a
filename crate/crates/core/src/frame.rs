//! Truncated frames in Hermite coordinates.
//!
//! A [`FrameSystem`] stores `N` frame elements as the rows of an `N x M`
//! matrix `C` of Hermite coefficients. With this representation
//!
//! * the analysis operator is `f -> C f`,
//! * the synthesis operator is `c -> C^T c`,
//! * the frame operator is `S = C^T C` (`M x M`) and the Gram matrix `G = C C^T`.
//!
//! All statements are about the truncated system as a frame for its own span.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqspaces::WeightFamily;

/// Relative eigenvalue threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Largest dimension handled by dense factorizations.
pub const DENSE_LIMIT: usize = 1024;

/// Stopping tolerance of the iterative dual solver.
pub const CG_TOL: f64 = 1e-12;

/// Default relative tolerance for [`FrameSystem::reconstruct`].
pub const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Power iterations used to refine probe estimates of operator norms.
const POWER_ITERATIONS: usize = 300;

/// Random probes per grade in [`FrameSystem::graded_operator_norms`].
const RANDOM_PROBES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    pub lower: f64,
    pub upper: f64,
    pub rank: usize,
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMode {
    /// `sum_n <f, dual_n> e_n`
    DualAnalysis,
    /// `sum_n <f, e_n> dual_n`
    DualSynthesis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualSolver {
    /// Cholesky up to [`DENSE_LIMIT`], conjugate gradients beyond.
    #[default]
    Auto,
    Direct,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszDiagnostics {
    pub is_riesz_basis: bool,
    pub elements: usize,
    pub dimension: usize,
    pub rank_frame_operator: usize,
    pub rank_gram: usize,
    pub gram_min_eigenvalue: f64,
    pub gram_max_eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Dense,
    PowerIteration,
}

/// Estimate of a weighted operator norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormEstimate {
    pub estimate: f64,
    /// Best ratio over explicit probe vectors before refinement.
    pub probe_lower_bound: f64,
    pub method: NormMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeOperatorNorms {
    pub grade: usize,
    pub analysis: OperatorNormEstimate,
    pub synthesis: OperatorNormEstimate,
    pub frame_operator: OperatorNormEstimate,
}

/// Per-grade norms of `U: X_k -> Theta_k`, `T: Theta_k -> X_k`, `S: X_k -> X_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FBoundednessTable {
    pub elements: usize,
    pub dimension: usize,
    pub weights: WeightFamily,
    pub grades: Vec<GradeOperatorNorms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationProbe {
    pub trials: usize,
    pub passed: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// `N` frame elements given by their Hermite coefficients.
#[derive(Debug, Clone)]
pub struct FrameSystem {
    coeffs: DMatrix<f64>,
    gram: OnceLock<DMatrix<f64>>,
    frame_matrix: OnceLock<DMatrix<f64>>,
    spectrum: OnceLock<Spectrum>,
    dual: OnceLock<DMatrix<f64>>,
}

impl FrameSystem {
    pub fn from_hermite_coeffs(coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.nrows() == 0 || coeffs.ncols() == 0 {
            return Err(Error::Empty("frame matrix needs at least one row and one column"));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame matrix".into()));
        }
        if let Some(row) = (0..coeffs.nrows()).find(|&i| coeffs.row(i).iter().all(|v| *v == 0.0)) {
            return Err(Error::ZeroRow(row));
        }
        Ok(Self {
            coeffs,
            gram: OnceLock::new(),
            frame_matrix: OnceLock::new(),
            spectrum: OnceLock::new(),
            dual: OnceLock::new(),
        })
    }

    /// Build from row-major data.
    pub fn from_rows(n: usize, m: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::DimensionMismatch {
                expected: n * m,
                got: data.len(),
            });
        }
        Self::from_hermite_coeffs(DMatrix::from_row_slice(n, m, data))
    }

    /// The first `m` Hermite functions.
    pub fn identity(m: usize) -> Result<Self> {
        Self::from_hermite_coeffs(DMatrix::identity(m, m))
    }

    /// The system restricted to the first `m` Hermite coefficients, keeping
    /// the leading `ceil(N m / M)` elements.
    pub fn truncated(&self, m: usize) -> Result<FrameSystem> {
        let (n, dim) = (self.elements(), self.dimension());
        if m == 0 || m > dim {
            return Err(Error::IndexOutOfRange { index: m, limit: dim });
        }
        let rows = (n * m).div_ceil(dim).min(n);
        FrameSystem::from_hermite_coeffs(self.coeffs.view((0, 0), (rows, m)).into_owned())
    }

    pub fn elements(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Row-major copy of the coefficient matrix.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.coeffs.transpose().as_slice().to_vec()
    }

    /// `G = C C^T`.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| &self.coeffs * self.coeffs.transpose())
    }

    /// `S = C^T C`.
    pub fn frame_matrix(&self) -> &DMatrix<f64> {
        self.frame_matrix.get_or_init(|| self.coeffs.transpose() * &self.coeffs)
    }

    fn spectrum(&self) -> &Spectrum {
        self.spectrum.get_or_init(|| {
            let eig = self.frame_matrix().clone().symmetric_eigen();
            Spectrum {
                values: eig.eigenvalues,
                vectors: eig.eigenvectors,
            }
        })
    }

    /// Eigenvalues of whichever of `S`, `G` is smaller, ascending.
    fn nonzero_spectrum_source(&self) -> Vec<f64> {
        let mut values: Vec<f64> = if self.dimension() <= self.elements() {
            self.spectrum().values.iter().copied().collect()
        } else {
            self.gram().clone().symmetric_eigenvalues().iter().copied().collect()
        };
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn frame_bounds(&self) -> Result<FrameBounds> {
        let values = self.nonzero_spectrum_source();
        let upper = values.last().copied().unwrap_or(0.0);
        if !(upper > 0.0) {
            return Err(Error::RankDeficient("frame operator is zero".into()));
        }
        let cutoff = RANK_TOL * upper;
        let nonzero: Vec<f64> = values.into_iter().filter(|v| *v > cutoff).collect();
        let lower = nonzero[0];
        Ok(FrameBounds {
            lower,
            upper,
            rank: nonzero.len(),
            condition: upper / lower,
        })
    }

    pub fn is_riesz_basis(&self) -> RieszDiagnostics {
        let gram_eigs = {
            let mut v: Vec<f64> = self.gram().clone().symmetric_eigenvalues().iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let gmax = gram_eigs.last().copied().unwrap_or(0.0);
        let gmin = gram_eigs.first().copied().unwrap_or(0.0);
        let rank_gram = gram_eigs.iter().filter(|v| **v > RANK_TOL * gmax).count();
        let rank_s = self.frame_bounds().map(|b| b.rank).unwrap_or(0);
        let n = self.elements();
        RieszDiagnostics {
            is_riesz_basis: rank_gram == n && rank_s == n && gmin > RANK_TOL * gmax,
            elements: n,
            dimension: self.dimension(),
            rank_frame_operator: rank_s,
            rank_gram,
            gram_min_eigenvalue: gmin,
            gram_max_eigenvalue: gmax,
        }
    }

    fn check_len(&self, expected: usize, got: usize) -> Result<()> {
        if expected != got {
            return Err(Error::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    /// `(<f, e_n>)_n = C f`.
    pub fn analyze(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(self.dimension(), f.len())?;
        Ok((&self.coeffs * DVector::from_column_slice(f)).as_slice().to_vec())
    }

    /// Hermite coefficients of `sum_n c_n e_n`, i.e. `C^T c`.
    pub fn synthesize_frame(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(self.elements(), c.len())?;
        Ok((self.coeffs.tr_mul(&DVector::from_column_slice(c))).as_slice().to_vec())
    }

    /// `S f`.
    pub fn apply_frame_operator(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(self.dimension(), f.len())?;
        Ok((self.frame_matrix() * DVector::from_column_slice(f)).as_slice().to_vec())
    }

    /// Canonical dual rows `S^{-1} e_n`, cached.
    pub fn dual_coeffs(&self) -> Result<&DMatrix<f64>> {
        if let Some(d) = self.dual.get() {
            return Ok(d);
        }
        let d = self.solve_dual(DualSolver::Auto)?;
        Ok(self.dual.get_or_init(|| d))
    }

    pub fn canonical_dual(&self) -> Result<FrameSystem> {
        FrameSystem::from_hermite_coeffs(self.dual_coeffs()?.clone())
    }

    /// Canonical dual computed with an explicit solver choice (not cached).
    pub fn canonical_dual_with(&self, solver: DualSolver) -> Result<FrameSystem> {
        FrameSystem::from_hermite_coeffs(self.solve_dual(solver)?)
    }

    fn solve_dual(&self, solver: DualSolver) -> Result<DMatrix<f64>> {
        let bounds = self.frame_bounds()?;
        let m = self.dimension();
        let full_rank = bounds.rank == m;
        let use_cg = match solver {
            DualSolver::Auto => m > DENSE_LIMIT,
            DualSolver::Direct => false,
            DualSolver::ConjugateGradient => true,
        };
        if full_rank && use_cg {
            return self.dual_by_cg();
        }
        if full_rank {
            if let Some(chol) = self.frame_matrix().clone().cholesky() {
                // rows of D solve S d_n = c_n, so D^T = S^{-1} C^T
                return Ok(chol.solve(&self.coeffs.transpose()).transpose());
            }
        }
        self.dual_by_pseudo_inverse(bounds.upper)
    }

    fn dual_by_pseudo_inverse(&self, upper: f64) -> Result<DMatrix<f64>> {
        let spec = self.spectrum();
        let cutoff = RANK_TOL * upper;
        let kept: Vec<usize> = (0..spec.values.len()).filter(|&i| spec.values[i] > cutoff).collect();
        let v = spec.vectors.select_columns(&kept);
        let inv = DVector::from_iterator(kept.len(), kept.iter().map(|&i| 1.0 / spec.values[i]));
        let ct = self.coeffs.transpose();
        let proj = v.tr_mul(&ct);
        let residual = &ct - &v * &proj;
        for n in 0..self.elements() {
            let r = residual.column(n).norm();
            let c = ct.column(n).norm();
            if r > 1e-8 * c {
                return Err(Error::RankDeficient(format!(
                    "frame element {} has a component of relative size {:e} outside the numerical range",
                    n + 1,
                    r / c
                )));
            }
        }
        let mut scaled = proj;
        for (row, s) in inv.iter().enumerate() {
            scaled.row_mut(row).scale_mut(*s);
        }
        Ok((v * scaled).transpose())
    }

    fn dual_by_cg(&self) -> Result<DMatrix<f64>> {
        let s = self.frame_matrix();
        let mut out = DMatrix::zeros(self.elements(), self.dimension());
        for n in 0..self.elements() {
            let rhs: Vec<f64> = self.coeffs.row(n).iter().copied().collect();
            let x = conjugate_gradient(|v| (s * DVector::from_column_slice(v)).as_slice().to_vec(), &rhs, CG_TOL, 10 * self.dimension())?;
            for (j, v) in x.into_iter().enumerate() {
                out[(n, j)] = v;
            }
        }
        Ok(out)
    }

    /// Reconstruction without the residual check: returns the result and
    /// `||result - f||`.
    pub fn reconstruct_with_residual(&self, f: &[f64], mode: ReconstructionMode) -> Result<(Vec<f64>, f64)> {
        self.check_len(self.dimension(), f.len())?;
        let d = self.dual_coeffs()?;
        let fv = DVector::from_column_slice(f);
        let out = match mode {
            ReconstructionMode::DualAnalysis => self.coeffs.tr_mul(&(d * &fv)),
            ReconstructionMode::DualSynthesis => d.tr_mul(&(&self.coeffs * &fv)),
        };
        let residual = (&out - &fv).norm();
        Ok((out.as_slice().to_vec(), residual))
    }

    /// Expand `f` through the canonical dual; fails when `f` is not in the span.
    pub fn reconstruct(&self, f: &[f64], mode: ReconstructionMode) -> Result<Vec<f64>> {
        self.reconstruct_tol(f, mode, RECONSTRUCTION_TOL)
    }

    /// As [`reconstruct`](Self::reconstruct) with relative tolerance `tol`.
    pub fn reconstruct_tol(&self, f: &[f64], mode: ReconstructionMode, tol: f64) -> Result<Vec<f64>> {
        let (out, residual) = self.reconstruct_with_residual(f, mode)?;
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tolerance = tol * norm.max(1.0);
        if residual > tolerance {
            return Err(Error::ReconstructionDefect { residual, tolerance });
        }
        Ok(out)
    }

    /// Weighted norms of the analysis, synthesis and frame operators for
    /// grades `0..=max_grade`.
    pub fn graded_operator_norms(&self, family: &WeightFamily, max_grade: usize, seed: u64) -> Result<FBoundednessTable> {
        family.check_grade(max_grade)?;
        let (n, m) = (self.elements(), self.dimension());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grades = Vec::with_capacity(max_grade + 1);
        for k in 0..=max_grade {
            let wn = family.weights(k, n);
            let wm = family.weights(k, m);
            let analysis = weighted(&self.coeffs, &wn, &wm);
            let synthesis = weighted(&self.coeffs.transpose(), &wm, &wn);
            let frame_op = weighted(self.frame_matrix(), &wm, &wm);
            grades.push(GradeOperatorNorms {
                grade: k,
                analysis: operator_norm(&analysis, &mut rng),
                synthesis: operator_norm(&synthesis, &mut rng),
                frame_operator: operator_norm(&frame_op, &mut rng),
            });
        }
        Ok(FBoundednessTable {
            elements: n,
            dimension: m,
            weights: *family,
            grades,
        })
    }

    /// Sums `S f = sum_n <f, e_n> e_n` in random term orders and compares
    /// each against the natural order.
    pub fn permutation_probe(&self, f: &[f64], trials: usize, seed: u64) -> Result<PermutationProbe> {
        let coeffs = self.analyze(f)?;
        let m = self.dimension();
        let sum_in = |order: &[usize]| {
            let mut acc = vec![0.0; m];
            for &i in order {
                let row = self.coeffs.row(i);
                for (a, r) in acc.iter_mut().zip(row.iter()) {
                    *a += coeffs[i] * r;
                }
            }
            acc
        };
        let mut order: Vec<usize> = (0..self.elements()).collect();
        let reference = sum_in(&order);
        let ref_norm = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tolerance = 1e-12 * (1.0 + ref_norm);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut passed = 0;
        let mut max_deviation: f64 = 0.0;
        for _ in 0..trials {
            order.shuffle(&mut rng);
            let s = sum_in(&order);
            let dev = s
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            max_deviation = max_deviation.max(dev);
            if dev <= tolerance {
                passed += 1;
            }
        }
        Ok(PermutationProbe {
            trials,
            passed,
            max_deviation,
            tolerance,
        })
    }
}

/// `diag(row_w) A diag(col_w)^{-1}`.
fn weighted(a: &DMatrix<f64>, row_w: &[f64], col_w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * row_w[i] / col_w[j])
}

fn norm2(v: &DVector<f64>) -> f64 {
    v.norm()
}

/// Spectral norm of `a`: probes, power refinement, and a dense eigensolve of
/// the smaller normal matrix when it fits.
fn operator_norm(a: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> OperatorNormEstimate {
    let cols = a.ncols();
    let mut best = 0.0;
    let mut best_vec = DVector::zeros(cols);
    for j in 0..cols {
        let c = a.column(j).norm();
        if c > best {
            best = c;
            best_vec = DVector::zeros(cols);
            best_vec[j] = 1.0;
        }
    }
    for _ in 0..RANDOM_PROBES {
        let g = DVector::from_iterator(cols, (0..cols).map(|_| StandardNormal.sample(rng)));
        let r = norm2(&(a * &g)) / norm2(&g);
        if r > best {
            best = r;
            best_vec = g;
        }
    }
    let probe_lower_bound = best;

    let mut v = best_vec.normalize();
    let mut estimate = best;
    for _ in 0..POWER_ITERATIONS {
        let w = a.tr_mul(&(a * &v));
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        v = w / wn;
        estimate = f64::max(estimate, norm2(&(a * &v)));
    }

    if a.nrows().min(a.ncols()) <= DENSE_LIMIT {
        let normal = if a.nrows() <= a.ncols() { a * a.transpose() } else { a.tr_mul(a) };
        let top = normal.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max);
        OperatorNormEstimate {
            estimate: top.sqrt().max(estimate),
            probe_lower_bound,
            method: NormMethod::Dense,
        }
    } else {
        OperatorNormEstimate {
            estimate,
            probe_lower_bound,
            method: NormMethod::PowerIteration,
        }
    }
}

/// Conjugate gradients for a symmetric positive definite operator.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::RankDeficient("operator is not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::ReconstructionDefect {
            residual: rr.sqrt() / bnorm,
            tolerance: tol,
        })
    }
}
