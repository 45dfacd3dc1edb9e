//! Gaussian-process regression with RBF/RQ kernels and constant or MLP mean.
//!
//! Hyperparameters are handled as one flat vector
//! `[log l, log s, (log α), log σ, mean parameters…]`; positive quantities are
//! in the log domain, mean parameters in the raw domain.

mod fit;
mod kernel;
mod mlp;

pub use fit::{fit_hypers, FitConfig, HyperMask, HyperOptTrace, Objective, TraceStep};
pub use kernel::{sq_dist, KernelKind, KernelSpec};
pub use mlp::{param_count, MlpMean};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{OrderedDataset, Orderings, Point, SeedSpec};
use crate::error::{Error, Result};
use crate::evidence::EvidenceEstimate;
use crate::gaussian::GaussianDistribution;
use crate::linalg::{cholesky_jittered, log_normal_pdf, Factor, LN_2PI};
use crate::model::ExactEvidence;
use crate::selection::{clml as clml_generic, ClmlEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFunction {
    Constant(f64),
    Mlp(MlpMean),
}

impl MeanFunction {
    pub fn n_params(&self) -> usize {
        match self {
            MeanFunction::Constant(_) => 1,
            MeanFunction::Mlp(m) => m.weights.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MeanFunction::Constant(c) => *c,
            MeanFunction::Mlp(m) => m.forward(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPModel {
    pub kernel: KernelSpec,
    pub noise_std: f64,
    pub mean: MeanFunction,
}

impl GPModel {
    pub fn new(kernel: KernelSpec, noise_std: f64, mean: MeanFunction) -> Result<Self> {
        let m = GPModel {
            kernel,
            noise_std,
            mean,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid(
                "noise_std",
                format!("must be finite and ≥ 0, got {}", self.noise_std),
            ));
        }
        Ok(())
    }

    /// Length of the flat hyperparameter vector.
    pub fn n_params(&self) -> usize {
        self.kernel.n_hypers() + 1 + self.mean.n_params()
    }

    /// Index of `log σ` in the flat vector; mean parameters follow it.
    pub fn noise_index(&self) -> usize {
        self.kernel.n_hypers()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![self.kernel.lengthscale.ln(), self.kernel.output_scale.ln()];
        if self.kernel.kind == KernelKind::Rq {
            p.push(self.kernel.alpha.ln());
        }
        p.push(self.noise_std.ln());
        match &self.mean {
            MeanFunction::Constant(c) => p.push(*c),
            MeanFunction::Mlp(m) => p.extend_from_slice(&m.weights),
        }
        p
    }

    pub fn with_params(&self, p: &[f64]) -> Result<GPModel> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                actual: p.len(),
            });
        }
        let mut m = self.clone();
        m.kernel.lengthscale = p[0].exp();
        m.kernel.output_scale = p[1].exp();
        if m.kernel.kind == KernelKind::Rq {
            m.kernel.alpha = p[2].exp();
        }
        let k = self.noise_index();
        m.noise_std = p[k].exp();
        match &mut m.mean {
            MeanFunction::Constant(c) => *c = p[k + 1],
            MeanFunction::Mlp(mlp) => mlp.weights.copy_from_slice(&p[k + 1..]),
        }
        m.validate()?;
        Ok(m)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec![
            "log_lengthscale".to_string(),
            "log_output_scale".to_string(),
        ];
        if self.kernel.kind == KernelKind::Rq {
            names.push("log_alpha".into());
        }
        names.push("log_noise_std".into());
        match &self.mean {
            MeanFunction::Constant(_) => names.push("mean_constant".into()),
            MeanFunction::Mlp(m) => {
                names.extend((0..m.weights.len()).map(|i| format!("mlp_weight_{i}")))
            }
        }
        names
    }

    fn noisy_cov(&self, xs: &[&[f64]]) -> DMatrix<f64> {
        let mut a = self.kernel.matrix(xs);
        let s2 = self.noise_std * self.noise_std;
        for i in 0..xs.len() {
            a[(i, i)] += s2;
        }
        a
    }

    fn residuals(&self, data: &OrderedDataset) -> Result<DVector<f64>> {
        let ys = data.targets()?;
        Ok(DVector::from_iterator(
            ys.len(),
            data.iter().zip(&ys).map(|(p, y)| y - self.mean.eval(&p.x)),
        ))
    }

    fn factorize(&self, data: &OrderedDataset) -> Result<(Factor, DVector<f64>)> {
        self.validate()?;
        let xs = data.inputs();
        let f = cholesky_jittered(&self.noisy_cov(&xs))?;
        Ok((f, self.residuals(data)?))
    }

    /// `−½ rᵀA⁻¹r − ½ log det A − (n/2) log 2π` with `A = K + σ²I`,
    /// `r = y − m(x)`. The empty dataset has log evidence 0.
    pub fn lml(&self, data: &OrderedDataset) -> Result<EvidenceEstimate> {
        if data.is_empty() {
            return Ok(EvidenceEstimate::exact(0.0));
        }
        let (f, r) = self.factorize(data)?;
        let z = f.whiten(&r);
        Ok(EvidenceEstimate::exact(
            -0.5 * z.norm_squared() - 0.5 * f.log_det() - 0.5 * data.len() as f64 * LN_2PI,
        ))
    }

    /// LML and its gradient with respect to [`GPModel::params`].
    pub fn lml_and_grad(&self, data: &OrderedDataset) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.n_params()];
        if data.is_empty() {
            return Ok((0.0, grad));
        }
        let (f, r) = self.factorize(data)?;
        let n = data.len();
        let alpha = f.solve(&r);
        let value = -0.5 * r.dot(&alpha) - 0.5 * f.log_det() - 0.5 * n as f64 * LN_2PI;

        // ∂LML/∂θ = ½ tr((ααᵀ − A⁻¹) ∂A/∂θ)
        let w = &alpha * alpha.transpose() - f.inverse();
        let xs = data.inputs();
        let dks = self.kernel.matrix_log_grads(&xs);
        for (p, dk) in dks.iter().enumerate() {
            grad[p] = 0.5 * w.component_mul(dk).sum();
        }
        let k = self.noise_index();
        grad[k] = self.noise_std * self.noise_std * w.trace();

        // ∂LML/∂m(x) = A⁻¹r
        match &self.mean {
            MeanFunction::Constant(_) => grad[k + 1] = alpha.sum(),
            MeanFunction::Mlp(mlp) => {
                let g = &mut grad[k + 1..];
                for (i, x) in xs.iter().enumerate() {
                    mlp.backward(x, alpha[i], g);
                }
            }
        }
        Ok((value, grad))
    }

    pub fn lml_grad(&self, data: &OrderedDataset) -> Result<Vec<f64>> {
        Ok(self.lml_and_grad(data)?.1)
    }

    /// Posterior predictive at `x_test`: over the latent `f`, or over `y`
    /// when `include_noise`.
    pub fn predict(
        &self,
        train: &OrderedDataset,
        x_test: &[Vec<f64>],
        include_noise: bool,
    ) -> Result<GaussianDistribution> {
        let (mean, mut cov) = self.predictive_moments(train, x_test)?;
        if include_noise {
            let s2 = self.noise_std * self.noise_std;
            for i in 0..cov.nrows() {
                cov[(i, i)] += s2;
            }
        }
        GaussianDistribution::dense_jittered(mean, cov)
    }

    /// Latent predictive mean and covariance.
    pub fn predictive_moments(
        &self,
        train: &OrderedDataset,
        x_test: &[Vec<f64>],
    ) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let test: Vec<&[f64]> = x_test.iter().map(|x| x.as_slice()).collect();
        let prior_mean: Vec<f64> = test.iter().map(|x| self.mean.eval(x)).collect();
        let kss = self.kernel.matrix(&test);
        if train.is_empty() {
            self.validate()?;
            return Ok((prior_mean, kss));
        }
        let (f, r) = self.factorize(train)?;
        let ks = self.kernel.cross(&train.inputs(), &test);
        let alpha = f.solve(&r);
        let mean = DVector::from_vec(prior_mean) + ks.transpose() * alpha;
        let v = f
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .expect("nonsingular factor");
        let cov = kss - v.transpose() * v;
        Ok((mean.as_slice().to_vec(), (&cov + cov.transpose()) * 0.5))
    }

    /// Per-point `log 𝒩(yᵢ; μᵢ, vᵢ + σ²)` of `test` under the marginal
    /// predictive given `train`.
    pub fn pointwise_log_predictive(
        &self,
        train: &OrderedDataset,
        test: &OrderedDataset,
    ) -> Result<Vec<f64>> {
        let xs: Vec<Vec<f64>> = test.iter().map(|p| p.x.clone()).collect();
        let ys = test.targets()?;
        let (mean, cov) = self.predictive_moments(train, &xs)?;
        let s2 = self.noise_std * self.noise_std;
        Ok(ys
            .iter()
            .enumerate()
            .map(|(i, y)| log_normal_pdf(*y, mean[i], cov[(i, i)].max(0.0) + s2))
            .collect())
    }

    /// `log p(𝒟_{≥m} | 𝒟_{<m})` averaged over orderings (`m` is 1-based).
    pub fn clml(
        &self,
        data: &OrderedDataset,
        m: usize,
        orderings: Orderings,
    ) -> Result<ClmlEstimate> {
        clml_generic(self, data, m, orderings)
    }
}

impl ExactEvidence for GPModel {
    fn log_evidence(&self, data: &OrderedDataset) -> Result<f64> {
        Ok(self.lml(data)?.log_value)
    }
}

/// Draw `y ~ 𝒩(m(x), K + σ²I)`.
pub fn gp_generate(model: &GPModel, inputs: &[Vec<f64>], seed: SeedSpec) -> Result<OrderedDataset> {
    if inputs.is_empty() {
        return Err(Error::InvalidData(
            "need at least one input location".into(),
        ));
    }
    model.validate()?;
    let xs: Vec<&[f64]> = inputs.iter().map(|x| x.as_slice()).collect();
    let f = cholesky_jittered(&model.noisy_cov(&xs))?;
    let mut rng = seed.rng();
    let z = DVector::from_iterator(
        xs.len(),
        (0..xs.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    let y = f.chol.l() * z;
    Ok(OrderedDataset::new(
        inputs
            .iter()
            .enumerate()
            .map(|(i, x)| Point::labelled(x.clone(), model.mean.eval(x) + y[i]))
            .collect(),
    ))
}
