//! Bayesian Fourier-feature regression,
//! `y = Σ_d a_d sin(d·x) + b_d cos(d·x) + ε`, with independent Gaussian
//! priors on the coefficients and Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{OrderedDataset, SeedSpec};
use crate::error::{Error, Result};
use crate::evidence::EvidenceEstimate;
use crate::gaussian::GaussianDistribution;
use crate::linalg::{cholesky_jittered, LN_2PI};
use crate::model::ExactEvidence;

/// Per-frequency prior standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorStdRule {
    /// `s_d = 1`.
    Unit,
    /// `s_d = 1/d²`.
    InverseSquare,
    Custom(Vec<f64>),
}

impl PriorStdRule {
    pub fn stds(&self, order: usize) -> Result<Vec<f64>> {
        match self {
            PriorStdRule::Unit => Ok(vec![1.0; order]),
            PriorStdRule::InverseSquare => Ok((1..=order).map(|d| 1.0 / (d * d) as f64).collect()),
            PriorStdRule::Custom(v) if v.len() == order => Ok(v.clone()),
            PriorStdRule::Custom(v) => Err(Error::DimensionMismatch {
                expected: order,
                actual: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierRegressionModel {
    prior_std: Vec<f64>,
    noise_std: f64,
}

impl FourierRegressionModel {
    pub fn new(order: usize, rule: &PriorStdRule, noise_std: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("order", "must be at least 1"));
        }
        let prior_std = rule.stds(order)?;
        if prior_std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(
                "prior_std",
                "all entries must be finite and > 0",
            ));
        }
        if !(noise_std.is_finite() && noise_std > 0.0) {
            return Err(Error::invalid(
                "noise_std",
                format!("must be > 0, got {noise_std}"),
            ));
        }
        Ok(FourierRegressionModel {
            prior_std,
            noise_std,
        })
    }

    pub fn order(&self) -> usize {
        self.prior_std.len()
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn prior_std(&self) -> &[f64] {
        &self.prior_std
    }

    /// Feature row `[sin(x), …, sin(Dx), cos(x), …, cos(Dx)]`.
    pub fn features(&self, x: f64) -> Vec<f64> {
        let d = self.order();
        let mut row = vec![0.0; 2 * d];
        for k in 0..d {
            let (s, c) = ((k + 1) as f64 * x).sin_cos();
            row[k] = s;
            row[d + k] = c;
        }
        row
    }

    fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let cols = 2 * self.order();
        DMatrix::from_fn(xs.len(), cols, |i, j| {
            let k = j % self.order();
            let f = (k + 1) as f64 * xs[i];
            if j < self.order() {
                f.sin()
            } else {
                f.cos()
            }
        })
    }

    /// Diagonal of the weight prior covariance, sin block then cos block.
    fn weight_variances(&self) -> DVector<f64> {
        let d = self.order();
        DVector::from_fn(2 * d, |j, _| self.prior_std[j % d].powi(2))
    }

    fn xy(data: &OrderedDataset) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((data.scalars()?, data.targets()?))
    }

    /// Exact log evidence; evaluated in function space for `n ≤ 2D`, in
    /// weight space otherwise.
    pub fn lml(&self, data: &OrderedDataset) -> Result<EvidenceEstimate> {
        if data.len() <= 2 * self.order() {
            self.lml_function_space(data)
        } else {
            self.lml_weight_space(data)
        }
    }

    /// `log 𝒩(y; 0, Φ S Φᵀ + σ² I)` via an n×n Cholesky.
    pub fn lml_function_space(&self, data: &OrderedDataset) -> Result<EvidenceEstimate> {
        let (xs, ys) = Self::xy(data)?;
        let n = xs.len();
        if n == 0 {
            return Ok(EvidenceEstimate::exact(0.0));
        }
        let phi = self.design(&xs);
        let s = self.weight_variances();
        let mut a = &phi * DMatrix::from_diagonal(&s) * phi.transpose();
        for i in 0..n {
            a[(i, i)] += self.noise_std.powi(2);
        }
        let f = cholesky_jittered(&a)?;
        let alpha = f.whiten(&DVector::from_vec(ys));
        Ok(EvidenceEstimate::exact(
            -0.5 * alpha.norm_squared() - 0.5 * f.log_det() - 0.5 * n as f64 * LN_2PI,
        ))
    }

    /// Same quantity through the 2D×2D weight posterior precision
    /// `M = S⁻¹ + ΦᵀΦ/σ²` and the determinant lemma
    /// `det(ΦSΦᵀ + σ²I) = det(M)·det(S)·σ²ⁿ`.
    pub fn lml_weight_space(&self, data: &OrderedDataset) -> Result<EvidenceEstimate> {
        let (xs, ys) = Self::xy(data)?;
        let n = xs.len();
        if n == 0 {
            return Ok(EvidenceEstimate::exact(0.0));
        }
        let noise2 = self.noise_std.powi(2);
        let y = DVector::from_vec(ys);
        let (post, b) = self.weight_posterior_parts(&xs, &y)?;
        let s = self.weight_variances();
        let bt_minv_b = b.dot(&post.solve(&b));
        let log_det =
            post.log_det() + s.iter().map(|v| v.ln()).sum::<f64>() + n as f64 * noise2.ln();
        Ok(EvidenceEstimate::exact(
            -0.5 * (y.norm_squared() / noise2 - bt_minv_b)
                - 0.5 * log_det
                - 0.5 * n as f64 * LN_2PI,
        ))
    }

    /// Factor of `M = S⁻¹ + ΦᵀΦ/σ²` and `b = Φᵀy/σ²`.
    fn weight_posterior_parts(
        &self,
        xs: &[f64],
        y: &DVector<f64>,
    ) -> Result<(crate::linalg::Factor, DVector<f64>)> {
        let noise2 = self.noise_std.powi(2);
        let phi = self.design(xs);
        let s = self.weight_variances();
        let mut m = phi.transpose() * &phi / noise2;
        for j in 0..s.len() {
            m[(j, j)] += 1.0 / s[j];
        }
        let b = phi.transpose() * y / noise2;
        Ok((cholesky_jittered(&m)?, b))
    }

    /// Posterior over the 2D weights `[a; b]`.
    pub fn weight_posterior(&self, train: &OrderedDataset) -> Result<GaussianDistribution> {
        let (xs, ys) = Self::xy(train)?;
        let (post, b) = self.weight_posterior_parts(&xs, &DVector::from_vec(ys))?;
        let mean = post.solve(&b);
        GaussianDistribution::dense(mean.as_slice().to_vec(), post.inverse().symmetric_part())
    }

    /// Posterior predictive over `f(x_test)`, or over `y` when `include_noise`.
    pub fn posterior_predictive(
        &self,
        train: &OrderedDataset,
        x_test: &[f64],
        include_noise: bool,
    ) -> Result<GaussianDistribution> {
        let (mean, mut cov) = self.predictive_moments(train, x_test)?;
        if include_noise {
            for i in 0..cov.nrows() {
                cov[(i, i)] += self.noise_std.powi(2);
            }
            GaussianDistribution::dense(mean, cov)
        } else {
            GaussianDistribution::dense_jittered(mean, cov)
        }
    }

    /// Latent predictive mean and covariance at `x_test`.
    pub fn predictive_moments(
        &self,
        train: &OrderedDataset,
        x_test: &[f64],
    ) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (xs, ys) = Self::xy(train)?;
        let (post, b) = self.weight_posterior_parts(&xs, &DVector::from_vec(ys))?;
        let w_mean = post.solve(&b);
        let phi_t = self.design(x_test);
        let mean = &phi_t * &w_mean;
        let cov = &phi_t * post.solve_mat(&phi_t.transpose());
        Ok((mean.as_slice().to_vec(), cov.symmetric_part()))
    }
}

trait SymmetricPart {
    fn symmetric_part(self) -> Self;
}

impl SymmetricPart for DMatrix<f64> {
    fn symmetric_part(self) -> Self {
        (&self + self.transpose()) * 0.5
    }
}

impl ExactEvidence for FourierRegressionModel {
    fn log_evidence(&self, data: &OrderedDataset) -> Result<f64> {
        Ok(self.lml(data)?.log_value)
    }
}

/// A fixed Fourier series, e.g. the ground truth of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierFunction {
    pub sin_coef: Vec<f64>,
    pub cos_coef: Vec<f64>,
}

impl FourierFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.sin_coef
            .iter()
            .zip(&self.cos_coef)
            .enumerate()
            .map(|(k, (a, b))| {
                let (s, c) = ((k + 1) as f64 * x).sin_cos();
                a * s + b * c
            })
            .sum()
    }
}

/// Synthetic data protocol: draw coefficients from the prior rule, inputs
/// uniformly on `x_range`, and add Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierDataConfig {
    pub order: usize,
    pub prior_std: PriorStdRule,
    pub noise_std: f64,
    pub n: usize,
    pub x_range: (f64, f64),
    /// Use these coefficients instead of sampling them.
    #[serde(default)]
    pub fixed_function: Option<FourierFunction>,
}

impl Default for FourierDataConfig {
    fn default() -> Self {
        FourierDataConfig {
            order: 9,
            prior_std: PriorStdRule::InverseSquare,
            noise_std: 0.1,
            n: 100,
            x_range: (0.0, 1.0),
            fixed_function: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FourierSample {
    pub data: OrderedDataset,
    pub truth: FourierFunction,
}

/// Deterministic draw of a Fourier dataset. Coefficients are drawn first
/// (`a_d` then `b_d` for each d), then all inputs, then all noise terms.
pub fn fourier_generate(config: &FourierDataConfig, seed: SeedSpec) -> Result<FourierSample> {
    if config.n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if config.noise_std < 0.0 || !config.noise_std.is_finite() {
        return Err(Error::invalid("noise_std", "must be finite and ≥ 0"));
    }
    let (lo, hi) = config.x_range;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::invalid(
            "x_range",
            "lower bound must be below upper bound",
        ));
    }
    let mut rng = seed.rng();
    let truth = match &config.fixed_function {
        Some(f) => f.clone(),
        None => {
            let stds = config.prior_std.stds(config.order)?;
            let mut sin_coef = Vec::with_capacity(config.order);
            let mut cos_coef = Vec::with_capacity(config.order);
            for s in &stds {
                sin_coef.push(s * rng.sample::<f64, _>(StandardNormal));
                cos_coef.push(s * rng.sample::<f64, _>(StandardNormal));
            }
            FourierFunction { sin_coef, cos_coef }
        }
    };
    let xs: Vec<f64> = (0..config.n).map(|_| rng.random_range(lo..hi)).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| truth.eval(x) + config.noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(FourierSample {
        data: OrderedDataset::from_xy(&xs, &ys)?,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_ordering;
    use crate::oracle::log_normal;
    use rand::SeedableRng;

    fn m(order: usize, rule: PriorStdRule, noise: f64) -> FourierRegressionModel {
        FourierRegressionModel::new(order, &rule, noise).unwrap()
    }

    #[test]
    fn empty_data_has_zero_evidence() {
        let model = m(3, PriorStdRule::Unit, 0.1);
        let d = OrderedDataset::from_xy(&[], &[]).unwrap();
        assert_eq!(model.lml(&d).unwrap().log_value, 0.0);
        assert_eq!(model.lml_weight_space(&d).unwrap().log_value, 0.0);
    }

    #[test]
    fn single_point_at_origin() {
        let model = m(1, PriorStdRule::Unit, 0.1);
        let d = OrderedDataset::from_xy(&[0.0], &[0.0]).unwrap();
        let v = model.lml(&d).unwrap().log_value;
        assert!((v - log_normal(0.0, 0.0, 1.01)).abs() < 1e-14);
        assert!((v - (-0.9239)).abs() < 1e-4);

        // Monte Carlo over (a₁, b₁): y | a, b ~ 𝒩(b, 0.01).
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let draws = 400_000;
        let mean_lik = (0..draws)
            .map(|_| {
                let _a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                log_normal(0.0, b, 0.01).exp()
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean_lik.ln() - v).abs() < 0.01);
    }

    #[test]
    fn function_and_weight_space_agree() {
        let cfg = FourierDataConfig {
            n: 40,
            x_range: (-3.0, 3.0),
            ..Default::default()
        };
        let sample = fourier_generate(&cfg, SeedSpec::new(3)).unwrap();
        for (order, rule) in [
            (3, PriorStdRule::Unit),
            (9, PriorStdRule::Unit),
            (9, PriorStdRule::InverseSquare),
        ] {
            let model = m(order, rule, 0.1);
            for n in [1, 5, 17, 40] {
                let d = sample.data.prefix(n);
                let a = model.lml_function_space(&d).unwrap().log_value;
                let b = model.lml_weight_space(&d).unwrap().log_value;
                assert!(
                    (a - b).abs() < 1e-8 * a.abs().max(1.0),
                    "order {order} n {n}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let cfg = FourierDataConfig {
            n: 60,
            x_range: (0.0, 6.0),
            ..Default::default()
        };
        let sample = fourier_generate(&cfg, SeedSpec::new(8)).unwrap();
        let model = m(9, PriorStdRule::Unit, 0.1);
        let base = model.lml(&sample.data).unwrap().log_value;
        for k in 0..5 {
            let shuffled = make_ordering(&sample.data, SeedSpec::new(1), k).unwrap();
            assert!((model.lml(&shuffled).unwrap().log_value - base).abs() < 1e-9);
        }
    }

    #[test]
    fn prior_predictive_without_training_data() {
        let model = m(3, PriorStdRule::InverseSquare, 0.2);
        let empty = OrderedDataset::from_xy(&[], &[]).unwrap();
        let x = 0.37;
        let p = model.posterior_predictive(&empty, &[x], true).unwrap();
        let expected: f64 = model
            .prior_std()
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let d = (k + 1) as f64;
                s * s * ((d * x).sin().powi(2) + (d * x).cos().powi(2))
            })
            .sum::<f64>()
            + 0.04;
        assert!(p.mean()[0].abs() < 1e-15);
        assert!((p.variances()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn interpolates_replicated_point() {
        let model = m(3, PriorStdRule::Unit, 0.01);
        let xs = vec![0.5; 30];
        let ys = vec![0.8; 30];
        let d = OrderedDataset::from_xy(&xs, &ys).unwrap();
        let p = model.posterior_predictive(&d, &[0.5], true).unwrap();
        assert!((p.mean()[0] - 0.8).abs() < 3.0 * p.variances()[0].sqrt());
    }

    #[test]
    fn conditional_identity_matches_predictive() {
        // log p(𝒟) − log p(𝒟_{<m}) = log p(𝒟_{≥m} | 𝒟_{<m})
        let cfg = FourierDataConfig {
            n: 25,
            x_range: (0.0, 6.0),
            ..Default::default()
        };
        let sample = fourier_generate(&cfg, SeedSpec::new(4)).unwrap();
        let model = m(3, PriorStdRule::Unit, 0.1);
        for cut in [0, 6, 13, 24] {
            let head = sample.data.prefix(cut);
            let tail = sample.data.suffix(cut);
            let pred = model
                .posterior_predictive(&head, &tail.scalars().unwrap(), true)
                .unwrap();
            let direct = pred.log_pdf(&tail.targets().unwrap()).unwrap();
            let diff =
                model.lml(&sample.data).unwrap().log_value - model.lml(&head).unwrap().log_value;
            assert!(
                (direct - diff).abs() < 1e-8,
                "cut {cut}: {direct} vs {diff}"
            );
        }
    }

    #[test]
    fn generator_defaults_and_noise() {
        let s = fourier_generate(&FourierDataConfig::default(), SeedSpec::new(1)).unwrap();
        assert_eq!(s.data.len(), 100);
        assert!(s
            .data
            .scalars()
            .unwrap()
            .iter()
            .all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(s.truth.sin_coef.len(), 9);

        let cfg = FourierDataConfig {
            order: 1,
            noise_std: 0.0,
            fixed_function: Some(FourierFunction {
                sin_coef: vec![1.0],
                cos_coef: vec![1.0],
            }),
            ..Default::default()
        };
        let s = fourier_generate(&cfg, SeedSpec::new(2)).unwrap();
        for p in s.data.iter() {
            assert_eq!(p.y.unwrap(), p.x[0].sin() + p.x[0].cos());
        }

        let cfg = FourierDataConfig {
            n: 100_000,
            ..Default::default()
        };
        let s = fourier_generate(&cfg, SeedSpec::new(3)).unwrap();
        let res: Vec<f64> = s
            .data
            .iter()
            .map(|p| p.y.unwrap() - s.truth.eval(p.x[0]))
            .collect();
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        let sd =
            (res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (res.len() - 1) as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.002, "sd = {sd}");
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = FourierDataConfig::default();
        let a = fourier_generate(&cfg, SeedSpec::new(77)).unwrap();
        let b = fourier_generate(&cfg, SeedSpec::new(77)).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn validates_parameters() {
        assert!(FourierRegressionModel::new(0, &PriorStdRule::Unit, 0.1).is_err());
        assert!(FourierRegressionModel::new(2, &PriorStdRule::Unit, 0.0).is_err());
        assert!(FourierRegressionModel::new(2, &PriorStdRule::Custom(vec![1.0]), 0.1).is_err());
    }
}
