//! Hermite functions, Gauss–Hermite quadrature and the coefficient-space
//! ladder operators.
//!
//! Internally the Hermite functions are indexed from zero, `h_0, h_1, ...`,
//! with `h_0(x) = pi^{-1/4} exp(-x^2/2)`. One-based indices only appear in
//! reports and in the weighted sequence norms (see [`CoefficientVector::paper_index`]).
//!
//! Evaluation uses the normalized three-term recurrence with a running
//! logarithmic scale, so values far in the Gaussian tail underflow cleanly to
//! zero instead of producing `0 * inf` artifacts.


use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// `pi^{-1/4}`, the value of `h_0(0)`.
pub const H0_AT_ZERO: f64 = 0.751_125_544_464_942_5;

/// Rescale the recurrence once the running value exceeds this magnitude.
const RESCALE_THRESHOLD: f64 = 1e150;

/// Convention for the index of the first entry of a coefficient sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndexOrigin {
    /// `values[0]` is the coefficient of `h_1` in the one-based numbering.
    PaperOneBased,
    /// `values[0]` is the coefficient of `h_0`.
    #[default]
    InternalZeroBased,
}

/// A finite real coefficient sequence.
///
/// Storage is always positional; the origin only changes how positions are
/// reported. Both conventions refer to the same functions, so the one-based
/// index of `values[i]` is `i + 1` either way.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    values: Vec<f64>,
    origin: IndexOrigin,
}

impl CoefficientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {i}")));
        }
        Ok(Self {
            values,
            origin: IndexOrigin::InternalZeroBased,
        })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            origin: IndexOrigin::InternalZeroBased,
        }
    }

    /// Unit vector `e_index` of the given length.
    pub fn unit(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::IndexOutOfRange { index, limit: len });
        }
        let mut v = Self::zeros(len);
        v.values[index] = 1.0;
        Ok(v)
    }

    pub fn with_origin(mut self, origin: IndexOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn origin(&self) -> IndexOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// One-based index of position `i`.
    pub fn paper_index(i: usize) -> usize {
        i + 1
    }

    /// Copy truncated or zero-padded to `len`.
    pub fn resized(&self, len: usize) -> Self {
        let mut values = self.values.clone();
        values.resize(len, 0.0);
        Self {
            values,
            origin: self.origin,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            origin: self.origin,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest index with a nonzero entry, if any.
    pub fn support_end(&self) -> Option<usize> {
        self.values.iter().rposition(|v| *v != 0.0)
    }
}

impl Serialize for CoefficientVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        CoefficientVector::new(values).map_err(serde::de::Error::custom)
    }
}

impl From<CoefficientVector> for Vec<f64> {
    fn from(c: CoefficientVector) -> Self {
        c.values
    }
}

/// Fill `out[n]` with `h_n(x)` for `n < out.len()`.
pub fn hermite_values(x: f64, out: &mut [f64]) {
    let Some(first) = out.first_mut() else {
        return;
    };
    let mut log_scale = -0.5 * x * x;
    let mut prev = 0.0;
    let mut cur = H0_AT_ZERO;
    *first = cur * log_scale.exp();
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        let kf = k as f64;
        let next = x * (2.0 / kf).sqrt() * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
        let mag = cur.abs();
        if mag > RESCALE_THRESHOLD {
            prev /= mag;
            cur /= mag;
            log_scale += mag.ln();
        }
        *slot = cur * log_scale.exp();
    }
}

/// `(h_n, h_{n-1})` at `x`, both multiplied by the same unknown positive
/// factor. Ratios of the pair are exact even where the values underflow.
fn scaled_pair(x: f64, n: usize) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 1..=n {
        let kf = k as f64;
        let next = x * (2.0 / kf).sqrt() * cur - ((kf - 1.0) / kf).sqrt() * prev;
        prev = cur;
        cur = next;
        let mag = cur.abs();
        if mag > RESCALE_THRESHOLD {
            prev /= mag;
            cur /= mag;
        }
    }
    (cur, prev)
}

/// Number of eigenvalues of the order-`size` Hermite Jacobi matrix below `x`
/// (Sturm count via the LDL^T pivots).
fn jacobi_count_below(x: f64, size: usize) -> usize {
    let mut pivot = -x;
    let mut count = usize::from(pivot < 0.0);
    for i in 1..size {
        let denom = if pivot == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { pivot };
        pivot = -x - (i as f64 / 2.0) / denom;
        count += usize::from(pivot < 0.0);
    }
    count
}

/// Gauss–Hermite nodes of order `size` (must be even), ascending.
///
/// The nodes are the eigenvalues of the symmetric Jacobi matrix with zero
/// diagonal and off-diagonal `sqrt(i/2)`. Each positive eigenvalue is isolated
/// by Sturm bisection and then polished with Newton steps on `h_size`.
pub fn gauss_hermite_nodes(size: usize) -> Vec<f64> {
    assert!(size >= 2 && size.is_multiple_of(2), "node count must be even and >= 2");
    let half = size / 2;
    let upper = (2.0 * size as f64 + 1.0).sqrt() + 1.0;
    let mut positive = Vec::with_capacity(half);
    let mut lo = 0.0;
    for j in 0..half {
        // eigenvalue number half + j (0-based) in ascending order
        let target = half + j + 1;
        let mut a = lo;
        let mut b = upper;
        while b - a > 1e-13 * b.max(1.0) {
            let mid = 0.5 * (a + b);
            if jacobi_count_below(mid, size) >= target {
                b = mid;
            } else {
                a = mid;
            }
        }
        let mut x = 0.5 * (a + b);
        for _ in 0..3 {
            let (hn, hm) = scaled_pair(x, size);
            let deriv = (2.0 * size as f64).sqrt() * hm - x * hn;
            if deriv == 0.0 {
                break;
            }
            let step = hn / deriv;
            let candidate = x - step;
            if !(a - 1e-12..=b + 1e-12).contains(&candidate) {
                break;
            }
            x = candidate;
            if step.abs() < 1e-16 * x.abs() {
                break;
            }
        }
        positive.push(x);
        lo = b;
    }
    let mut nodes: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
    nodes.extend(positive);
    nodes
}

/// Precomputed quadrature and sampling data for the first `max_index`
/// Hermite functions.
///
/// The stored weights are the Gauss–Hermite weights multiplied by `exp(x^2)`,
/// i.e. `1 / sum_{k < q} h_k(x_i)^2` for a rule with `q` nodes, so that
/// `sum_i w_i f(x_i) h_n(x_i)` approximates `<f, h_n>` directly.
#[derive(Debug, Clone)]
pub struct HermiteContext {
    max_index: usize,
    quad_nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    domain_cutoff: f64,
    grid_step: f64,
    /// `node_values[(i, n)] = h_n(x_i)` for `n < max_index`.
    node_values: DMatrix<f64>,
}

impl HermiteContext {
    /// Context for `max_index` functions with `2 * max_index` quadrature nodes.
    pub fn new(max_index: usize) -> Result<Self> {
        if max_index == 0 {
            return Err(Error::Empty("Hermite context needs at least one function"));
        }
        let size = 2 * max_index;
        let quad_nodes = gauss_hermite_nodes(size);
        let mut node_values = DMatrix::zeros(size, max_index);
        let mut quad_weights = Vec::with_capacity(size);
        let mut buf = vec![0.0; size];
        for (i, &x) in quad_nodes.iter().enumerate() {
            hermite_values(x, &mut buf);
            let christoffel: f64 = buf.iter().map(|v| v * v).sum();
            quad_weights.push(1.0 / christoffel);
            for n in 0..max_index {
                node_values[(i, n)] = buf[n];
            }
        }
        Ok(Self {
            max_index,
            quad_nodes,
            quad_weights,
            domain_cutoff: (2.0 * (max_index as f64 + 1.0)).sqrt() + 5.0,
            grid_step: 0.01,
            node_values,
        })
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn quad_nodes(&self) -> &[f64] {
        &self.quad_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn domain_cutoff(&self) -> f64 {
        self.domain_cutoff
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    /// Sampling grid `-X, -X + step, ..., X` used for sup-norm estimates.
    pub fn sampling_grid(&self) -> Vec<f64> {
        let steps = (self.domain_cutoff / self.grid_step).round() as i64;
        (-steps..=steps).map(|i| i as f64 * self.grid_step).collect()
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFinite("evaluation point".into()));
        }
        if x.abs() > 2.0 * self.domain_cutoff {
            return Err(Error::Domain(format!(
                "|x| = {} exceeds twice the domain cutoff {}",
                x.abs(),
                self.domain_cutoff
            )));
        }
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len > self.max_index {
            return Err(Error::IndexOutOfRange {
                index: len.saturating_sub(1),
                limit: self.max_index,
            });
        }
        Ok(())
    }

    /// `h_n(x)`, zero-based `n`.
    pub fn hermite_eval(&self, n: usize, x: f64) -> Result<f64> {
        if n >= self.max_index {
            return Err(Error::IndexOutOfRange {
                index: n,
                limit: self.max_index,
            });
        }
        self.check_x(x)?;
        let mut buf = vec![0.0; n + 1];
        hermite_values(x, &mut buf);
        Ok(buf[n])
    }

    /// `(<f, h_n>)_{n < count}` by Gauss–Hermite quadrature.
    pub fn hermite_coefficients<F>(&self, f: F, count: usize) -> Result<CoefficientVector>
    where
        F: Fn(f64) -> f64,
    {
        self.check_len(count)?;
        let mut weighted = Vec::with_capacity(self.quad_nodes.len());
        let mut envelope = Vec::with_capacity(self.quad_nodes.len());
        for (&x, &w) in self.quad_nodes.iter().zip(&self.quad_weights) {
            let fx = f(x);
            if !fx.is_finite() || !(fx * w).is_finite() {
                return Err(Error::Domain(format!("integrand is not finite at node {x}")));
            }
            weighted.push(fx * w);
            envelope.push(fx.abs() * (-0.5 * x * x).exp());
        }
        // |f| exp(-x^2/2) must have decayed by the outermost nodes, otherwise
        // f grows like exp(x^2/2) or faster and the products f h_n are not integrable
        let peak = envelope.iter().copied().fold(0.0, f64::max);
        let edge = envelope[0].max(envelope[envelope.len() - 1]);
        if !peak.is_finite() || edge > 1e-3 * peak {
            return Err(Error::Domain(
                "integrand does not decay against exp(x^2/2) within the quadrature window".into(),
            ));
        }
        let values = (0..count)
            .map(|n| {
                weighted
                    .iter()
                    .enumerate()
                    .map(|(i, wf)| wf * self.node_values[(i, n)])
                    .sum()
            })
            .collect();
        CoefficientVector::new(values)
    }

    /// The function `x -> sum_n c_n h_n(x)`.
    pub fn synthesize<'a>(&'a self, c: &CoefficientVector) -> Result<HermiteSeries<'a>> {
        self.check_len(c.len())?;
        Ok(HermiteSeries {
            ctx: self,
            coeffs: c.values().to_vec(),
        })
    }

    /// `∫ f(x)^2 dx` for a function given by its samples on the quadrature nodes.
    pub fn l2_norm_sq_on_nodes<F>(&self, f: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        self.quad_nodes
            .iter()
            .zip(&self.quad_weights)
            .map(|(&x, &w)| {
                let v = f(x);
                w * v * v
            })
            .sum()
    }

    /// Coefficient-space `d/dx` on the first `count` Hermite functions.
    pub fn derivative_matrix(&self, count: usize) -> Result<LadderOperator> {
        if count + 1 > self.max_index {
            return Err(Error::IndexOutOfRange {
                index: count,
                limit: self.max_index - 1,
            });
        }
        Ok(LadderOperator::derivative(count))
    }

    /// Coefficient-space multiplication by `x` on the first `count` Hermite functions.
    pub fn position_matrix(&self, count: usize) -> Result<LadderOperator> {
        if count + 1 > self.max_index {
            return Err(Error::IndexOutOfRange {
                index: count,
                limit: self.max_index - 1,
            });
        }
        Ok(LadderOperator::position(count))
    }
}

/// A finite Hermite series bound to its context.
#[derive(Debug, Clone)]
pub struct HermiteSeries<'a> {
    ctx: &'a HermiteContext,
    coeffs: Vec<f64>,
}

impl HermiteSeries<'_> {
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.ctx.check_x(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let mut buf = vec![0.0; self.coeffs.len()];
        hermite_values(x, &mut buf);
        buf.iter().zip(&self.coeffs).map(|(h, c)| h * c).sum()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderKind {
    Derivative,
    Position,
}

/// Tridiagonal operator on the first `size` Hermite coefficients.
///
/// Both operators couple index `n` to `n - 1` and `n + 1`; entries that would
/// reach index `size` are dropped, so the truncated matrix is exact only on
/// vectors supported below `size - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LadderOperator {
    kind: LadderKind,
    size: usize,
}

impl LadderOperator {
    pub fn derivative(size: usize) -> Self {
        Self {
            kind: LadderKind::Derivative,
            size,
        }
    }

    pub fn position(size: usize) -> Self {
        Self {
            kind: LadderKind::Position,
            size,
        }
    }

    pub fn kind(&self) -> LadderKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Entries `(upper, lower)` of row `n`: coefficients of `c_{n+1}` and `c_{n-1}`.
    fn bands(&self, n: usize) -> (f64, f64) {
        let up = ((n as f64 + 1.0) / 2.0).sqrt();
        let down = (n as f64 / 2.0).sqrt();
        match self.kind {
            LadderKind::Derivative => (up, -down),
            LadderKind::Position => (up, down),
        }
    }

    /// Apply to `c` (zero-padded to `size`).
    pub fn apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() > self.size {
            return Err(Error::DimensionMismatch {
                expected: self.size,
                got: c.len(),
            });
        }
        let at = |i: usize| c.get(i).copied().unwrap_or(0.0);
        Ok((0..self.size)
            .map(|n| {
                let (up, down) = self.bands(n);
                let mut v = 0.0;
                if n + 1 < self.size {
                    v += up * at(n + 1);
                }
                if n > 0 {
                    v += down * at(n - 1);
                }
                v
            })
            .collect())
    }

    pub fn apply_vector(&self, c: &CoefficientVector) -> Result<CoefficientVector> {
        CoefficientVector::new(self.apply(c.values())?)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for n in 0..self.size {
            let (up, down) = self.bands(n);
            if n + 1 < self.size {
                m[(n, n + 1)] = up;
            }
            if n > 0 {
                m[(n, n - 1)] = down;
            }
        }
        m
    }
}

/// `h_n(0)` for `n < count`: odd entries vanish and
/// `h_{2j}(0) = -sqrt((2j-1)/(2j)) h_{2j-2}(0)`.
pub fn hermite_values_at_zero(count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    let mut v = H0_AT_ZERO;
    for (n, slot) in out.iter_mut().enumerate() {
        if n % 2 == 1 {
            continue;
        }
        if n > 0 {
            let nf = n as f64;
            v *= -((nf - 1.0) / nf).sqrt();
        }
        *slot = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Physicists' Hermite polynomial from the explicit Rodrigues expansion
    /// `H_n(x) = n! sum_m (-1)^m (2x)^{n-2m} / (m! (n-2m)!)`, with exact
    /// integer coefficients.
    fn rodrigues_h(n: usize, x: f64) -> f64 {
        let fact = |k: usize| (1..=k as i128).product::<i128>();
        let mut sum = 0.0;
        for m in 0..=n / 2 {
            let coeff = fact(n) / (fact(m) * fact(n - 2 * m)) * if m % 2 == 0 { 1 } else { -1 };
            sum += coeff as f64 * (2.0 * x).powi((n - 2 * m) as i32);
        }
        let norm = (2f64.powi(n as i32) * fact(n) as f64 * PI.sqrt()).sqrt();
        sum * (-x * x / 2.0).exp() / norm
    }

    #[test]
    fn h0_at_zero_is_pi_to_minus_quarter() {
        let ctx = HermiteContext::new(8).unwrap();
        let v = ctx.hermite_eval(0, 0.0).unwrap();
        assert!(close(v, PI.powf(-0.25), 1e-15));
        assert!(close(v, 0.751125544, 1e-9));
        assert_eq!(ctx.hermite_eval(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn recurrence_matches_rodrigues() {
        let ctx = HermiteContext::new(16).unwrap();
        for n in 0..=10 {
            for &x in &[-3.0, -1.0, 0.0, 0.5, 1.0, 2.0] {
                let a = ctx.hermite_eval(n, x).unwrap();
                let b = rodrigues_h(n, x);
                assert!(close(a, b, 1e-12), "n={n} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn eval_errors() {
        let ctx = HermiteContext::new(4).unwrap();
        assert!(matches!(ctx.hermite_eval(4, 0.0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(ctx.hermite_eval(0, f64::NAN), Err(Error::NonFinite(_))));
        assert!(matches!(ctx.hermite_eval(0, 1e3), Err(Error::Domain(_))));
    }

    #[test]
    fn far_tail_underflows_without_nan() {
        let mut buf = vec![0.0; 600];
        hermite_values(45.0, &mut buf);
        assert!(buf.iter().all(|v| v.is_finite()));
        assert_eq!(buf[0], 0.0);
        assert!(buf[599].abs() > 0.0);
    }

    #[test]
    fn nodes_match_golub_welsch() {
        let size = 40;
        let mut jacobi = DMatrix::zeros(size, size);
        for i in 1..size {
            let b = (i as f64 / 2.0).sqrt();
            jacobi[(i - 1, i)] = b;
            jacobi[(i, i - 1)] = b;
        }
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.row(0).iter())
            .map(|(&x, &v)| (x, v * v * PI.sqrt()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let ctx = HermiteContext::new(size / 2).unwrap();
        for ((x, w), (&xq, &wq)) in pairs.iter().zip(ctx.quad_nodes().iter().zip(ctx.quad_weights())) {
            assert!(close(*x, xq, 1e-12), "{x} vs {xq}");
            // eigenvector components are only accurate in absolute terms
            let wq_raw = wq * (-xq * xq).exp();
            assert!((w - wq_raw).abs() <= 1e-13, "{w} vs {wq_raw}");
            if *w > 1e-6 {
                assert!((w - wq_raw).abs() <= 1e-10 * w, "{w} vs {wq_raw}");
            }
        }
    }

    #[test]
    fn nodes_increasing_and_weights_positive() {
        let ctx = HermiteContext::new(256).unwrap();
        assert!(ctx.quad_nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(ctx.quad_weights().iter().all(|w| *w > 0.0 && w.is_finite()));
    }

    #[test]
    fn coefficient_examples() {
        let ctx = HermiteContext::new(32).unwrap();
        let c = ctx
            .hermite_coefficients(|x| ctx.hermite_eval(3, x).unwrap(), 32)
            .unwrap();
        for (i, v) in c.values().iter().enumerate() {
            let expected = if i == 3 { 1.0 } else { 0.0 };
            assert!(close(*v, expected, 1e-12), "index {i}: {v}");
        }

        let g = ctx.hermite_coefficients(|x| (-x * x / 2.0).exp(), 32).unwrap();
        assert!(close(g.values()[0], PI.powf(0.25), 1e-12));
        assert!(g.values()[1..].iter().all(|v| v.abs() < 1e-12));

        let g1 = ctx
            .hermite_coefficients(|x| x * (-x * x / 2.0).exp(), 32)
            .unwrap();
        assert!(close(g1.values()[1], PI.powf(0.25) / 2f64.sqrt(), 1e-12));
        assert!(g1.values()[0].abs() < 1e-12);
        assert!(g1.values()[2..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn coefficients_reject_fast_growth() {
        let ctx = HermiteContext::new(16).unwrap();
        assert!(matches!(
            ctx.hermite_coefficients(|x| (x * x).exp(), 16),
            Err(Error::Domain(_))
        ));
        assert!(ctx.hermite_coefficients(|_| 1.0, 17).is_err());
    }

    #[test]
    fn synthesize_unit_and_parseval() {
        let ctx = HermiteContext::new(16).unwrap();
        let e0 = CoefficientVector::unit(4, 0).unwrap();
        let s = ctx.synthesize(&e0).unwrap();
        for &x in &[-2.0, 0.0, 0.3, 4.0] {
            assert!(close(s.eval(x).unwrap(), ctx.hermite_eval(0, x).unwrap(), 1e-12));
        }
        let r = 0.5f64.sqrt();
        let c = CoefficientVector::new(vec![r, r]).unwrap();
        let s = ctx.synthesize(&c).unwrap();
        let norm = ctx.l2_norm_sq_on_nodes(|x| s.eval_unchecked(x)).sqrt();
        assert!(close(norm, 1.0, 1e-10));
    }

    #[test]
    fn derivative_examples() {
        let ctx = HermiteContext::new(16).unwrap();
        let d = ctx.derivative_matrix(8).unwrap();
        let dc = d.apply(&[1.0]).unwrap();
        assert!(close(dc[1], -0.5f64.sqrt(), 1e-15));
        assert!(dc.iter().enumerate().all(|(i, v)| i == 1 || *v == 0.0));
        let norm: f64 = dc.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(close(norm, 0.5f64.sqrt(), 1e-15));

        // finite-difference oracle on h_0
        let deriv = ctx.synthesize(&CoefficientVector::new(dc).unwrap()).unwrap();
        let h = 1e-4;
        for &x in &[-2.0, 0.0, 1.5] {
            let fd = (ctx.hermite_eval(0, x + h).unwrap() - ctx.hermite_eval(0, x - h).unwrap()) / (2.0 * h);
            assert!(close(deriv.eval(x).unwrap(), fd, 1e-7));
        }
        assert!(ctx.derivative_matrix(16).is_err());
    }

    #[test]
    fn position_examples() {
        let ctx = HermiteContext::new(16).unwrap();
        let p = ctx.position_matrix(8).unwrap();
        let pc = p.apply(&[1.0]).unwrap();
        assert!(close(pc[1], 0.5f64.sqrt(), 1e-15));
        let s = ctx.synthesize(&CoefficientVector::new(pc).unwrap()).unwrap();
        for &x in &[-1.0, 0.0, 2.5] {
            assert!(close(s.eval(x).unwrap(), x * ctx.hermite_eval(0, x).unwrap(), 1e-14));
        }
        let dense = p.to_dense();
        assert_eq!(dense, dense.transpose());
    }

    #[test]
    fn canonical_commutation() {
        let size = 12;
        let d = LadderOperator::derivative(size).to_dense();
        let p = LadderOperator::position(size).to_dense();
        let comm = &d * &p - &p * &d;
        for i in 0..size - 1 {
            for j in 0..size - 2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(close(comm[(i, j)], expected, 1e-12), "({i},{j}) = {}", comm[(i, j)]);
            }
        }
    }

    #[test]
    fn delta_values_match_eval() {
        let ctx = HermiteContext::new(64).unwrap();
        let d = hermite_values_at_zero(64);
        for (n, v) in d.iter().enumerate() {
            assert!(close(*v, ctx.hermite_eval(n, 0.0).unwrap(), 1e-14));
        }
    }

    #[test]
    fn coefficient_vector_rejects_nan_and_serializes_as_array() {
        assert!(CoefficientVector::new(vec![1.0, f64::INFINITY]).is_err());
        let c = CoefficientVector::new(vec![0.1, -2.5e-300]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, "[0.1,-2.5e-300]");
        let back: CoefficientVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
