//! Multivariate Gaussian distributions with dense or diagonal covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, cholesky_strict, Factor, LN_2PI};

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

/// Gaussian with a validated positive-definite covariance.
#[derive(Debug, Clone)]
pub struct GaussianDistribution {
    mean: DVector<f64>,
    covariance: Covariance,
    factor: Option<Factor>,
}

impl GaussianDistribution {
    pub fn new(mean: DVector<f64>, covariance: Covariance) -> Result<Self> {
        let factor = match &covariance {
            Covariance::Dense(m) => {
                if m.nrows() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        actual: m.nrows(),
                    });
                }
                Some(cholesky_strict(m)?)
            }
            Covariance::Diagonal(d) => {
                if d.len() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        actual: d.len(),
                    });
                }
                if d.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(Error::NotPositiveDefinite { jitter: 0.0 });
                }
                None
            }
        };
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite mean".into()));
        }
        Ok(GaussianDistribution {
            mean,
            covariance,
            factor,
        })
    }

    /// Dense Gaussian whose covariance may be only semi-definite (e.g. a
    /// low-rank predictive); the jitter ladder is added to the diagonal.
    pub fn dense_jittered(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let factor = cholesky_jittered(&cov)?;
        let mut cov = cov;
        for i in 0..cov.nrows() {
            cov[(i, i)] += factor.jitter;
        }
        if mean.len() != cov.nrows() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        Ok(GaussianDistribution {
            mean: DVector::from_vec(mean),
            covariance: Covariance::Dense(cov),
            factor: Some(factor),
        })
    }

    pub fn dense(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(mean), Covariance::Dense(cov))
    }

    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        Self::new(
            DVector::from_vec(mean),
            Covariance::Diagonal(DVector::from_vec(variances)),
        )
    }

    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::diagonal(vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        match &self.covariance {
            Covariance::Dense(m) => m.clone(),
            Covariance::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    /// Marginal variances.
    pub fn variances(&self) -> DVector<f64> {
        match &self.covariance {
            Covariance::Dense(m) => m.diagonal(),
            Covariance::Diagonal(d) => d.clone(),
        }
    }

    pub fn log_det_cov(&self) -> f64 {
        match (&self.covariance, &self.factor) {
            (Covariance::Dense(_), Some(f)) => f.log_det(),
            (Covariance::Diagonal(d), _) => d.iter().map(|v| v.ln()).sum(),
            _ => unreachable!("dense covariance always carries its factor"),
        }
    }

    /// `Σ⁻¹ v`.
    fn precision_times(&self, v: &DVector<f64>) -> DVector<f64> {
        match (&self.covariance, &self.factor) {
            (Covariance::Dense(_), Some(f)) => f.solve(v),
            (Covariance::Diagonal(d), _) => v.component_div(d),
            _ => unreachable!(),
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let r = DVector::from_column_slice(x) - &self.mean;
        let maha = r.dot(&self.precision_times(&r));
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + self.log_det_cov() + maha))
    }

    /// Draw `mean + L z` with `z` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        let x = match (&self.covariance, &self.factor) {
            (Covariance::Dense(_), Some(f)) => &self.mean + f.chol.l_dirty().lower_triangle() * z,
            (Covariance::Diagonal(d), _) => &self.mean + d.map(f64::sqrt).component_mul(&z),
            _ => unreachable!(),
        };
        x.as_slice().to_vec()
    }
}

/// `KL(q ‖ p)` in nats, closed form.
pub fn kl_gaussian(q: &GaussianDistribution, p: &GaussianDistribution) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    let k = q.dim() as f64;
    let diff = &p.mean - &q.mean;
    let maha = diff.dot(&p.precision_times(&diff));
    let trace = match (&q.covariance, &p.covariance) {
        (Covariance::Diagonal(dq), Covariance::Diagonal(dp)) => dq.component_div(dp).sum(),
        _ => {
            let sq = q.covariance_matrix();
            let solved = match &p.factor {
                Some(f) => f.solve_mat(&sq),
                None => {
                    let dp = p.variances();
                    let mut m = sq;
                    for (i, mut row) in m.row_iter_mut().enumerate() {
                        row /= dp[i];
                    }
                    m
                }
            };
            solved.trace()
        }
    };
    let kl = 0.5 * (trace + maha - k + p.log_det_cov() - q.log_det_cov());
    Ok(kl.max(0.0))
}
