//! Model-evaluation contracts consumed by the approximation, sampling and
//! selection layers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::OrderedDataset;
use crate::error::{Error, Result};
use crate::gaussian::GaussianDistribution;

/// Prior over a finite-dimensional parameter vector.
#[derive(Debug, Clone)]
pub enum Prior {
    Gaussian(GaussianDistribution),
    /// Independent uniform on the box `[lower, upper]`.
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl Prior {
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !l.is_finite() || !u.is_finite() || l >= u)
        {
            return Err(Error::invalid(
                "uniform prior",
                "bounds must satisfy lower < upper",
            ));
        }
        Ok(Prior::Uniform { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::Gaussian(g) => g.dim(),
            Prior::Uniform { lower, .. } => lower.len(),
        }
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        match self {
            Prior::Gaussian(_) => w.iter().all(|v| v.is_finite()),
            Prior::Uniform { lower, upper } => w
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u),
        }
    }

    /// Strictly inside the support (distance to any uniform bound above `tol`).
    pub fn interior(&self, w: &[f64], tol: f64) -> bool {
        match self {
            Prior::Gaussian(_) => true,
            Prior::Uniform { lower, upper } => w
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v > *l + tol && *v < *u - tol),
        }
    }

    pub fn log_density(&self, w: &[f64]) -> f64 {
        match self {
            Prior::Gaussian(g) => g.log_pdf(w).unwrap_or(f64::NEG_INFINITY),
            Prior::Uniform { lower, upper } => {
                if self.contains(w) {
                    -log_volume(lower, upper)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn grad_log_density(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Prior::Gaussian(g) => {
                let r = g.mean() - DVector::from_column_slice(w);
                let prec = g
                    .covariance_matrix()
                    .try_inverse()
                    .expect("validated PD covariance");
                (prec * r).as_slice().to_vec()
            }
            Prior::Uniform { .. } => vec![0.0; w.len()],
        }
    }

    /// Hessian of the log density; zero on the interior of a uniform box.
    pub fn hessian_log_density(&self) -> DMatrix<f64> {
        match self {
            Prior::Gaussian(g) => -g
                .covariance_matrix()
                .try_inverse()
                .expect("validated PD covariance"),
            Prior::Uniform { lower, .. } => DMatrix::zeros(lower.len(), lower.len()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Prior::Gaussian(g) => g.sample(rng),
            Prior::Uniform { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
        }
    }

    /// Per-dimension integration bounds: the box for uniform priors, mean ± 8 sd otherwise.
    pub fn integration_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Prior::Gaussian(g) => g
                .mean()
                .iter()
                .zip(g.variances().iter())
                .map(|(m, v)| (m - 8.0 * v.sqrt(), m + 8.0 * v.sqrt()))
                .collect(),
            Prior::Uniform { lower, upper } => {
                lower.iter().copied().zip(upper.iter().copied()).collect()
            }
        }
    }
}

fn log_volume(lower: &[f64], upper: &[f64]) -> f64 {
    lower.iter().zip(upper).map(|(l, u)| (u - l).ln()).sum()
}

/// A parametric model `p(𝒟|w) p(w)` with derivatives of the log-likelihood.
///
/// Analytic gradients and Hessians should be provided where available; the
/// defaults fall back to central finite differences.
pub trait DifferentiableModel: Sync {
    fn dim(&self) -> usize;

    fn prior(&self) -> &Prior;

    fn log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<f64>;

    fn grad_log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<Vec<f64>> {
        finite_difference_gradient(|v| self.log_likelihood(data, v), w, 1e-5)
    }

    fn hessian_log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<DMatrix<f64>> {
        finite_difference_hessian(|v| self.grad_log_likelihood(data, v), w, 1e-4)
    }

    /// `E_q[log p(𝒟|w)]` in closed form, when the model provides one.
    fn expected_log_likelihood(
        &self,
        _data: &OrderedDataset,
        _q: &GaussianDistribution,
    ) -> Option<Result<f64>> {
        None
    }

    /// Parameter values whose log joint equals that of `w` by a symmetry of the model.
    fn symmetric_modes(&self, _data: &OrderedDataset, _w: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn log_joint(&self, data: &OrderedDataset, w: &[f64]) -> Result<f64> {
        let lp = self.prior().log_density(w);
        if lp == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(lp + self.log_likelihood(data, w)?)
    }
}

/// A model whose evidence can be evaluated exactly on any dataset (in
/// particular on every prefix of an ordering).
pub trait ExactEvidence: Sync {
    fn log_evidence(&self, data: &OrderedDataset) -> Result<f64>;

    /// Whether the evidence is invariant to the presentation order.
    fn is_exchangeable(&self) -> bool {
        true
    }
}

impl<T: ExactEvidence + ?Sized> ExactEvidence for &T {
    fn log_evidence(&self, data: &OrderedDataset) -> Result<f64> {
        (**self).log_evidence(data)
    }

    fn is_exchangeable(&self) -> bool {
        (**self).is_exchangeable()
    }
}

pub fn finite_difference_gradient<F>(f: F, w: &[f64], rel_step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut x = w.to_vec();
    let mut g = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let h = rel_step * w[i].abs().max(1.0);
        x[i] = w[i] + h;
        let fp = f(&x)?;
        x[i] = w[i] - h;
        let fm = f(&x)?;
        x[i] = w[i];
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Symmetrized central-difference Jacobian of a gradient.
pub fn finite_difference_hessian<F>(grad: F, w: &[f64], rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let d = w.len();
    let mut h = DMatrix::zeros(d, d);
    let mut x = w.to_vec();
    for j in 0..d {
        let step = rel_step * w[j].abs().max(1.0);
        x[j] = w[j] + step;
        let gp = grad(&x)?;
        x[j] = w[j] - step;
        let gm = grad(&x)?;
        x[j] = w[j];
        for i in 0..d {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}
