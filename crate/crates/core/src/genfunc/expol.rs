//! Banded perturbations of the Hermite basis, `e_n = h_n + sum_{i<=r} a_n^i h_{n+i}`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameSystem;

/// How the off-diagonal coefficients `a_n^i` are generated from `eps_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum ExpolPattern {
    /// `a_n^i = eps_i`
    Constant,
    /// `a_n^i = (-1)^n eps_i`
    Alternating,
    /// `a_n^i = eps_i u` with `u` uniform in `[-1, 1]`
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpolSpec {
    pub eps: Vec<f64>,
    #[serde(flatten)]
    pub pattern: ExpolPattern,
}

impl ExpolSpec {
    pub fn constant(eps: Vec<f64>) -> Self {
        Self {
            eps,
            pattern: ExpolPattern::Constant,
        }
    }

    pub fn r(&self) -> usize {
        self.eps.len()
    }

    /// Builds the `M x M` truncation.
    pub fn build(&self, m: usize) -> Result<ExpolFrame> {
        let r = self.r();
        match self.pattern {
            ExpolPattern::Constant => build_expol_frame(m, r, &self.eps, |_, i| self.eps[i - 1]),
            ExpolPattern::Alternating => build_expol_frame(m, r, &self.eps, |n, i| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * self.eps[i - 1]
            }),
            ExpolPattern::Random { seed } => {
                // one draw per (n, i) in a fixed order, independent of m up to truncation
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let draws: Vec<f64> = (0..m * r).map(|_| rng.random_range(-1.0..=1.0)).collect();
                build_expol_frame(m, r, &self.eps, |n, i| self.eps[i - 1] * draws[(n - 1) * r + (i - 1)])
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpolFrame {
    pub system: FrameSystem,
    /// Coefficients `a_n^i` dropped because `n + i` exceeds the truncation.
    pub dropped: Vec<(usize, usize, f64)>,
}

impl ExpolFrame {
    /// Euclidean norm of the dropped coefficients.
    pub fn truncation_loss(&self) -> f64 {
        self.dropped.iter().map(|(_, _, a)| a * a).sum::<f64>().sqrt()
    }
}

/// Builds `e_n = h_n + sum_{i=1}^{r} a(n, i) h_{n+i}` for `n = 1..=m` (one-based),
/// as rows of an `m x m` Hermite-coefficient matrix.
///
/// Rejects the construction unless `eps_i >= 0`, `sum_i eps_i < 1`,
/// `|a(n, i)| <= eps_i` for `n >= 2` and `sum_i |a(1, i)| <= 1`.
pub fn build_expol_frame<A>(m: usize, r: usize, eps: &[f64], a: A) -> Result<ExpolFrame>
where
    A: Fn(usize, usize) -> f64,
{
    if m == 0 {
        return Err(Error::Empty("expol truncation"));
    }
    if eps.len() != r {
        return Err(Error::Hypothesis {
            constraint: format!("one eps_i per band (r = {r}, got {} values)", eps.len()),
        });
    }
    if let Some(i) = eps.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::Hypothesis {
            constraint: format!("eps_{} >= 0 (got {})", i + 1, eps[i]),
        });
    }
    let total: f64 = eps.iter().sum();
    if total >= 1.0 {
        return Err(Error::Hypothesis {
            constraint: format!("sum_i eps_i < 1 (got {total})"),
        });
    }
    let mut c = DMatrix::identity(m, m);
    let mut dropped = Vec::new();
    let mut first_row_sum = 0.0;
    for n in 1..=m {
        for i in 1..=r {
            let v = a(n, i);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("a_{n}^{i}")));
            }
            if n == 1 {
                first_row_sum += v.abs();
            } else if v.abs() > eps[i - 1] {
                return Err(Error::Hypothesis {
                    constraint: format!("|a_n^i| <= eps_i for n >= 2 (|a_{n}^{i}| = {} > {})", v.abs(), eps[i - 1]),
                });
            }
            let col = n - 1 + i;
            if col < m {
                c[(n - 1, col)] = v;
            } else if v != 0.0 {
                dropped.push((n, i, v));
            }
        }
    }
    if first_row_sum > 1.0 {
        return Err(Error::Hypothesis {
            constraint: format!("sum_i |a_1^i| <= 1 (got {first_row_sum})"),
        });
    }
    Ok(ExpolFrame {
        system: FrameSystem::from_hermite_coeffs(c)?,
        dropped,
    })
}
