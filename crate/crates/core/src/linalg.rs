//! Cholesky helpers shared by the Gaussian, GP and Fourier code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Diagonal jitter tried, in order, when a factorization fails.
pub const JITTER_LADDER: [f64; 3] = [0.0, 1e-8, 1e-6];

/// A Cholesky factor together with the jitter that was needed to obtain it.
#[derive(Debug, Clone)]
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    pub fn log_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b`.
    pub fn whiten(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }
}

fn try_factor(a: &DMatrix<f64>, jitter: f64) -> Option<Factor> {
    let mut m = a.clone();
    if jitter > 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
    }
    let chol = Cholesky::new(m)?;
    // nalgebra accepts tiny or subnormal pivots; treat them as failures.
    if chol
        .l_dirty()
        .diagonal()
        .iter()
        .any(|&d| !(d.is_finite() && d > 1e-150))
    {
        return None;
    }
    Some(Factor { chol, jitter })
}

/// Factor without any jitter; used as the positive-definiteness check.
pub fn cholesky_strict(a: &DMatrix<f64>) -> Result<Factor> {
    check_square_symmetric(a)?;
    try_factor(a, 0.0).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })
}

/// Factor, escalating through [`JITTER_LADDER`] on failure.
pub fn cholesky_jittered(a: &DMatrix<f64>) -> Result<Factor> {
    check_square_symmetric(a)?;
    JITTER_LADDER
        .iter()
        .find_map(|&j| try_factor(a, j))
        .ok_or(Error::NotPositiveDefinite {
            jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })
}

fn check_square_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("matrix has non-finite entries".into()));
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidData("matrix is not symmetric".into()));
            }
        }
    }
    Ok(())
}

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log 𝒩(x; mean, var)` for scalars.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

/// Numerically stable `log Σ exp(v)`; `-∞` for an empty or all `-∞` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
