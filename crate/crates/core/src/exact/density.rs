//! Conjugate Gaussian-mean density model: `x ~ 𝒩(u, 1)`, `u ~ 𝒩(μ, σ²)`.
//!
//! The evidence is `𝒩(x; μ1, I + σ²11ᵀ)`. With `r = x − μ1`, the rank-one
//! inverse `(I + σ²11ᵀ)⁻¹ = I − σ²/(1 + nσ²) 11ᵀ` and the determinant
//! `1 + nσ²` make every quantity O(n).

use serde::{Deserialize, Serialize};

use crate::data::OrderedDataset;
use crate::error::{Error, Result};
use crate::evidence::EvidenceEstimate;
use crate::gaussian::GaussianDistribution;
use crate::linalg::{log_normal_pdf, LN_2PI};
use crate::model::{DifferentiableModel, ExactEvidence, Prior};

use super::single;

/// Variance of the prior over the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorVariance {
    Finite(f64),
    /// The σ² → 0⁺ limit: `u` is pinned to `μ`.
    PointMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensityModel {
    pub prior_mean: f64,
    pub prior_variance: PriorVariance,
}

struct Summary {
    n: f64,
    /// Σ (xᵢ − μ)
    sum_r: f64,
    /// Σ (xᵢ − μ)²
    sum_r2: f64,
    sum_x: f64,
}

impl GaussianDensityModel {
    pub fn new(prior_mean: f64, prior_variance: f64) -> Result<Self> {
        if !(prior_variance.is_finite() && prior_variance > 0.0) {
            return Err(Error::invalid(
                "prior_variance",
                format!("must be finite and > 0, got {prior_variance}"),
            ));
        }
        if !prior_mean.is_finite() {
            return Err(Error::invalid("prior_mean", "must be finite"));
        }
        Ok(GaussianDensityModel {
            prior_mean,
            prior_variance: PriorVariance::Finite(prior_variance),
        })
    }

    pub fn point_mass(prior_mean: f64) -> Self {
        GaussianDensityModel {
            prior_mean,
            prior_variance: PriorVariance::PointMass,
        }
    }

    /// σ², with the point-mass limit reported as 0.
    pub fn sigma2(&self) -> f64 {
        match self.prior_variance {
            PriorVariance::Finite(v) => v,
            PriorVariance::PointMass => 0.0,
        }
    }

    fn finite_sigma2(&self) -> Result<f64> {
        match self.prior_variance {
            PriorVariance::Finite(v) if v > 0.0 && v.is_finite() => Ok(v),
            PriorVariance::Finite(v) => Err(Error::invalid(
                "prior_variance",
                format!("must be > 0, got {v}"),
            )),
            PriorVariance::PointMass => Err(Error::Unsupported(
                "the point-mass prior has no density over u".into(),
            )),
        }
    }

    fn validate(&self) -> Result<()> {
        if let PriorVariance::Finite(v) = self.prior_variance {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "prior_variance",
                    format!("must be > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    fn summarize(&self, data: &OrderedDataset) -> Result<Summary> {
        let xs = data.scalars()?;
        let mut s = Summary {
            n: xs.len() as f64,
            sum_r: 0.0,
            sum_r2: 0.0,
            sum_x: 0.0,
        };
        for x in xs {
            let r = x - self.prior_mean;
            s.sum_r += r;
            s.sum_r2 += r * r;
            s.sum_x += x;
        }
        Ok(s)
    }

    /// Exact log evidence.
    pub fn lml(&self, data: &OrderedDataset) -> Result<EvidenceEstimate> {
        self.validate()?;
        let s = self.summarize(data)?;
        if s.n == 0.0 {
            return Ok(EvidenceEstimate::exact(0.0));
        }
        let sigma2 = self.sigma2();
        let det = 1.0 + s.n * sigma2;
        let quad = s.sum_r2 - sigma2 / det * s.sum_r * s.sum_r;
        Ok(EvidenceEstimate::exact(
            -0.5 * quad - 0.5 * det.ln() - 0.5 * s.n * LN_2PI,
        ))
    }

    /// Posterior precision `1/σ² + n` and mean.
    fn posterior_moments(&self, s: &Summary) -> Result<(f64, f64)> {
        let sigma2 = self.finite_sigma2()?;
        let precision = 1.0 / sigma2 + s.n;
        Ok((
            (s.sum_x + self.prior_mean / sigma2) / precision,
            1.0 / precision,
        ))
    }

    /// Posterior over `u`; undefined (error) for the point-mass prior.
    pub fn posterior(&self, data: &OrderedDataset) -> Result<GaussianDistribution> {
        let s = self.summarize(data)?;
        let (mean, var) = self.posterior_moments(&s)?;
        GaussianDistribution::univariate(mean, var)
    }

    /// Posterior predictive over the next observation.
    pub fn predictive(&self, data: &OrderedDataset) -> Result<GaussianDistribution> {
        self.validate()?;
        let s = self.summarize(data)?;
        match self.prior_variance {
            PriorVariance::PointMass => GaussianDistribution::univariate(self.prior_mean, 1.0),
            PriorVariance::Finite(_) => {
                let (mean, var) = self.posterior_moments(&s)?;
                GaussianDistribution::univariate(mean, 1.0 + var)
            }
        }
    }

    /// Per-point log likelihood `log 𝒩(x; u, 1)`.
    pub fn point_log_likelihood(x: f64, u: f64) -> f64 {
        log_normal_pdf(x, u, 1.0)
    }

    /// The one-parameter view `w = u` for Laplace, ELBO and sampling.
    pub fn parameter_model(&self) -> Result<DensityParameterModel> {
        let sigma2 = self.finite_sigma2()?;
        Ok(DensityParameterModel {
            model: *self,
            prior: Prior::Gaussian(GaussianDistribution::univariate(self.prior_mean, sigma2)?),
        })
    }
}

impl ExactEvidence for GaussianDensityModel {
    fn log_evidence(&self, data: &OrderedDataset) -> Result<f64> {
        Ok(self.lml(data)?.log_value)
    }
}

/// [`GaussianDensityModel`] as a differentiable model over the mean `u`.
#[derive(Debug, Clone)]
pub struct DensityParameterModel {
    model: GaussianDensityModel,
    prior: Prior,
}

impl DensityParameterModel {
    pub fn density(&self) -> &GaussianDensityModel {
        &self.model
    }
}

impl DifferentiableModel for DensityParameterModel {
    fn dim(&self) -> usize {
        1
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<f64> {
        let u = single(w)?;
        Ok(data
            .scalars()?
            .iter()
            .map(|&x| log_normal_pdf(x, u, 1.0))
            .sum())
    }

    fn grad_log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<Vec<f64>> {
        let u = single(w)?;
        Ok(vec![data.scalars()?.iter().map(|x| x - u).sum()])
    }

    fn hessian_log_likelihood(
        &self,
        data: &OrderedDataset,
        w: &[f64],
    ) -> Result<nalgebra::DMatrix<f64>> {
        single(w)?;
        Ok(nalgebra::DMatrix::from_element(1, 1, -(data.len() as f64)))
    }

    /// `Σᵢ −½ log 2π − ½((xᵢ − m_q)² + v_q)`.
    fn expected_log_likelihood(
        &self,
        data: &OrderedDataset,
        q: &GaussianDistribution,
    ) -> Option<Result<f64>> {
        if q.dim() != 1 {
            return Some(Err(Error::DimensionMismatch {
                expected: 1,
                actual: q.dim(),
            }));
        }
        let (m, v) = (q.mean()[0], q.variances()[0]);
        Some(data.scalars().map(|xs| {
            xs.iter()
                .map(|x| -0.5 * LN_2PI - 0.5 * ((x - m).powi(2) + v))
                .sum()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{log_integrate, log_normal, moments};
    use proptest::prelude::*;

    fn oracle_lml(mu: f64, s2: f64, xs: &[f64]) -> f64 {
        let f =
            |u: f64| log_normal(u, mu, s2) + xs.iter().map(|&x| log_normal(x, u, 1.0)).sum::<f64>();
        let (lo, hi) = post_window(mu, s2, xs);
        log_integrate(f, lo, hi, 40_000)
    }

    /// Integration window: ±12 posterior sd around the posterior mean.
    fn post_window(mu: f64, s2: f64, xs: &[f64]) -> (f64, f64) {
        let prec = 1.0 / s2 + xs.len() as f64;
        let m = (xs.iter().sum::<f64>() + mu / s2) / prec;
        let sd = (1.0 / prec).sqrt();
        (m - 12.0 * sd, m + 12.0 * sd)
    }

    #[test]
    fn point_mass_single_zero() {
        let m = GaussianDensityModel::point_mass(0.0);
        let v = m
            .lml(&OrderedDataset::from_scalars(&[0.0]))
            .unwrap()
            .log_value;
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
        assert!((v - (-0.9189)).abs() < 1e-4);
        assert!(m.posterior(&OrderedDataset::from_scalars(&[0.0])).is_err());
        let p = m.predictive(&OrderedDataset::from_scalars(&[3.0])).unwrap();
        assert_eq!((p.mean()[0], p.variances()[0]), (0.0, 1.0));
    }

    #[test]
    fn unit_prior_single_zero() {
        let m = GaussianDensityModel::new(0.0, 1.0).unwrap();
        let d = OrderedDataset::from_scalars(&[0.0]);
        let v = m.lml(&d).unwrap().log_value;
        let oracle = oracle_lml(0.0, 1.0, &[0.0]);
        assert!((v - oracle).abs() < 1e-10);
        assert!((v - (-1.2655)).abs() < 1e-4);
    }

    #[test]
    fn two_points_match_quadrature() {
        let m = GaussianDensityModel::new(0.0, 1.0).unwrap();
        let d = OrderedDataset::from_scalars(&[1.0, -1.0]);
        let v = m.lml(&d).unwrap().log_value;
        assert!((v - oracle_lml(0.0, 1.0, &[1.0, -1.0])).abs() < 1e-8);
    }

    #[test]
    fn empty_data() {
        let m = GaussianDensityModel::new(0.7, 2.0).unwrap();
        let d = OrderedDataset::from_scalars(&[]);
        assert_eq!(m.lml(&d).unwrap().log_value, 0.0);
        let post = m.posterior(&d).unwrap();
        assert_eq!((post.mean()[0], post.variances()[0]), (0.7, 2.0));
        let m = GaussianDensityModel::new(0.0, 4.0).unwrap();
        let pred = m.predictive(&d).unwrap();
        assert_eq!((pred.mean()[0], pred.variances()[0]), (0.0, 5.0));
    }

    #[test]
    fn posterior_and_predictive_closed_form() {
        let m = GaussianDensityModel::new(0.0, 1.0).unwrap();
        let d = OrderedDataset::from_scalars(&[2.0]);
        let post = m.posterior(&d).unwrap();
        assert!((post.mean()[0] - 1.0).abs() < 1e-15 && (post.variances()[0] - 0.5).abs() < 1e-15);
        let pred = m.predictive(&d).unwrap();
        assert!((pred.mean()[0] - 1.0).abs() < 1e-15 && (pred.variances()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn posterior_matches_quadrature_moments() {
        let xs = [1.0, -1.0, 3.0];
        let m = GaussianDensityModel::new(0.0, 1.0).unwrap();
        let post = m.posterior(&OrderedDataset::from_scalars(&xs)).unwrap();
        let (lo, hi) = post_window(0.0, 1.0, &xs);
        let (qm, qv) = moments(
            |u| log_normal(u, 0.0, 1.0) + xs.iter().map(|&x| log_normal(x, u, 1.0)).sum::<f64>(),
            lo,
            hi,
            40_000,
        );
        assert!((post.mean()[0] - qm).abs() < 1e-8);
        assert!((post.variances()[0] - qv).abs() < 1e-8);
    }

    #[test]
    fn near_flat_prior_predictive() {
        let xs = [0.3, 1.9, -0.4, 1.0];
        let m = GaussianDensityModel::new(0.0, 1e6).unwrap();
        let pred = m.predictive(&OrderedDataset::from_scalars(&xs)).unwrap();
        let mean = xs.iter().sum::<f64>() / 4.0;
        assert!((pred.mean()[0] - mean).abs() < 1e-3);
        assert!((pred.variances()[0] - 1.25).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_variance() {
        assert!(GaussianDensityModel::new(0.0, 0.0).is_err());
        assert!(GaussianDensityModel::new(0.0, -1.0).is_err());
        let bad = GaussianDensityModel {
            prior_mean: 0.0,
            prior_variance: PriorVariance::Finite(-2.0),
        };
        assert!(bad.lml(&OrderedDataset::from_scalars(&[1.0])).is_err());
    }

    #[test]
    fn vague_priors_lose_evidence_but_not_predictions() {
        let xs = [
            0.8, 1.7, 0.2, 1.1, 2.3, 0.9, 1.4, 0.5, 1.9, 0.1, 1.2, 0.7, 2.0, 1.6, 0.4, 1.0, 1.3,
            0.6, 2.1, 1.5,
        ];
        let d = OrderedDataset::from_scalars(&xs);
        let grid: Vec<f64> = (0..=60)
            .map(|i| 10f64 * 100f64.powf(i as f64 / 60.0))
            .collect();
        let lml: Vec<f64> = grid
            .iter()
            .map(|&s2| {
                GaussianDensityModel::new(0.0, s2)
                    .unwrap()
                    .lml(&d)
                    .unwrap()
                    .log_value
            })
            .collect();
        assert!(lml.windows(2).all(|w| w[1] < w[0]));
        let p10 = GaussianDensityModel::new(0.0, 10.0)
            .unwrap()
            .predictive(&d)
            .unwrap();
        let p1000 = GaussianDensityModel::new(0.0, 1000.0)
            .unwrap()
            .predictive(&d)
            .unwrap();
        assert!(((p10.mean()[0] - p1000.mean()[0]) / p1000.mean()[0]).abs() < 0.01);
        assert!(((p10.variances()[0] - p1000.variances()[0]) / p1000.variances()[0]).abs() < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn lml_telescopes(mu in -2.0..2.0f64, s2 in 0.01..100.0f64,
                          xs in prop::collection::vec(-4.0..4.0f64, 1..15)) {
            let m = GaussianDensityModel::new(mu, s2).unwrap();
            let d = OrderedDataset::from_scalars(&xs);
            let total = m.lml(&d).unwrap().log_value;
            let mut acc = 0.0;
            for (i, x) in xs.iter().enumerate() {
                let pred = m.predictive(&d.prefix(i)).unwrap();
                acc += pred.log_pdf(&[*x]).unwrap();
            }
            prop_assert!((total - acc).abs() < 1e-8);
        }

        #[test]
        fn lml_and_moments_match_quadrature(mu in -2.0..2.0f64, s2 in 0.05..50.0f64,
                                            xs in prop::collection::vec(-3.0..3.0f64, 1..10)) {
            let m = GaussianDensityModel::new(mu, s2).unwrap();
            let d = OrderedDataset::from_scalars(&xs);
            let v = m.lml(&d).unwrap().log_value;
            prop_assert!((v - oracle_lml(mu, s2, &xs)).abs() < 1e-6 * v.abs().max(1.0));
            let post = m.posterior(&d).unwrap();
            let (lo, hi) = post_window(mu, s2, &xs);
            let (qm, qv) = moments(
                |u| log_normal(u, mu, s2) + xs.iter().map(|&x| log_normal(x, u, 1.0)).sum::<f64>(),
                lo, hi, 20_000);
            prop_assert!((post.mean()[0] - qm).abs() < 1e-6);
            prop_assert!((post.variances()[0] - qv).abs() < 1e-6);
        }
    }
}
