//! Evidence approximations: Laplace, BIC, ELBO and the rectangular Occam
//! factor.

pub(crate) mod optimize;

use nalgebra::DMatrix;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{OrderedDataset, SeedSpec};
use crate::error::{Error, Result};
use crate::exact::GaussianDensityModel;
use crate::gaussian::{kl_gaussian, GaussianDistribution};
use crate::linalg::{cholesky_strict, LN_2PI};
use crate::model::{DifferentiableModel, Prior};

use optimize::maximize;

const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceComponents {
    pub log_lik_at_map: f64,
    pub log_prior_at_map: f64,
    /// `(D/2) log 2π + ½ log det Σ`
    pub gaussian_volume_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub w_map: Vec<f64>,
    pub log_det_sigma: f64,
    pub components: LaplaceComponents,
    pub log_evidence: f64,
    pub hessian_mode: HessianMode,
}

/// Distance from a uniform bound below which an optimum counts as on the boundary.
const BOUNDARY_TOL: f64 = 1e-8;

/// Laplace approximation around the MAP reached by ascent from `init`.
///
/// Among parameter values the model reports as symmetric images of the
/// located optimum, the one with the smallest Euclidean norm is used.
pub fn laplace_evidence<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    init: &[f64],
    mode: HessianMode,
) -> Result<LaplaceReport> {
    check_dim(model.dim(), init.len())?;
    let prior = model.prior();
    if !prior.contains(init) {
        return Err(Error::invalid("init", "must lie inside the prior support"));
    }
    let found = maximize(
        |w| model.log_joint(data, w),
        |w| {
            let mut g = model.grad_log_likelihood(data, w)?;
            for (a, b) in g.iter_mut().zip(prior.grad_log_density(w)) {
                *a += b;
            }
            Ok(g)
        },
        |w| Ok(model.hessian_log_likelihood(data, w)? + prior.hessian_log_density()),
        init,
        MAX_ITER,
    )?;
    let w_map = lowest_norm_image(model, data, found.w, found.value)?;
    if !prior.interior(&w_map, BOUNDARY_TOL) {
        return Err(Error::BoundaryOptimum);
    }
    let mut neg_h = -(model.hessian_log_likelihood(data, &w_map)? + prior.hessian_log_density());
    if mode == HessianMode::Diagonal {
        neg_h = DMatrix::from_diagonal(&neg_h.diagonal());
    }
    let precision = cholesky_strict(&neg_h).map_err(|_| {
        Error::DegenerateCurvature(format!(
            "negative Hessian at {w_map:?} is not positive definite"
        ))
    })?;
    let log_det_sigma = -precision.log_det();
    let d = w_map.len() as f64;
    let components = LaplaceComponents {
        log_lik_at_map: model.log_likelihood(data, &w_map)?,
        log_prior_at_map: prior.log_density(&w_map),
        gaussian_volume_term: 0.5 * d * LN_2PI + 0.5 * log_det_sigma,
    };
    Ok(LaplaceReport {
        log_evidence: components.log_lik_at_map
            + components.log_prior_at_map
            + components.gaussian_volume_term,
        w_map,
        log_det_sigma,
        components,
        hessian_mode: mode,
    })
}

fn lowest_norm_image<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    w: Vec<f64>,
    value: f64,
) -> Result<Vec<f64>> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut best = w.clone();
    for cand in model.symmetric_modes(data, &w) {
        let v = model.log_joint(data, &cand)?;
        if (v - value).abs() <= 1e-9 * (1.0 + value.abs()) && norm(&cand) < norm(&best) - 1e-12 {
            best = cand;
        }
    }
    Ok(best)
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicReport {
    pub w_mle: Vec<f64>,
    pub max_log_likelihood: f64,
    /// `(D/2) log n`
    pub penalty: f64,
    pub value: f64,
}

/// `log p(𝒟 | w_MLE) − (D/2) log n`, with the MLE found by likelihood-only
/// ascent from `init`.
pub fn bic<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    init: &[f64],
) -> Result<BicReport> {
    check_dim(model.dim(), init.len())?;
    if data.is_empty() {
        return Err(Error::InvalidData(
            "BIC needs at least one observation".into(),
        ));
    }
    let found = maximize(
        |w| model.log_likelihood(data, w),
        |w| model.grad_log_likelihood(data, w),
        |w| model.hessian_log_likelihood(data, w),
        init,
        MAX_ITER,
    )?;
    let penalty = 0.5 * model.dim() as f64 * (data.len() as f64).ln();
    Ok(BicReport {
        w_mle: found.w,
        max_log_likelihood: found.value,
        penalty,
        value: found.value - penalty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboReport {
    pub value: f64,
    /// `E_q[log p(𝒟|w)]`
    pub data_fit: f64,
    /// `KL(q ‖ p)`
    pub kl: f64,
    /// Monte Carlo standard error of `data_fit` (0 when analytic).
    pub std_error: f64,
    pub analytic: bool,
}

/// Samples per independently seeded chunk.
const CHUNK: usize = 1024;

/// `E_q[log p(𝒟|w)] − KL(q‖p)`.
///
/// The data-fit term is analytic when the model provides it and a Monte
/// Carlo average over `n_samples` draws from `q` otherwise. Uniform priors
/// are rejected: a Gaussian `q` puts mass outside the box, so the KL is
/// infinite.
pub fn elbo<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    q: &GaussianDistribution,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<ElboReport> {
    check_dim(model.dim(), q.dim())?;
    let kl = match model.prior() {
        Prior::Gaussian(p) => kl_gaussian(q, p)?,
        Prior::Uniform { .. } => {
            return Err(Error::Unsupported(
                "KL from a Gaussian q to a uniform prior is infinite".into(),
            ))
        }
    };
    if let Some(v) = model.expected_log_likelihood(data, q) {
        let data_fit = v?;
        return Ok(ElboReport {
            value: data_fit - kl,
            data_fit,
            kl,
            std_error: 0.0,
            analytic: true,
        });
    }
    if n_samples < 2 {
        return Err(Error::invalid(
            "n_samples",
            "need at least two Monte Carlo samples",
        ));
    }
    let values = sample_map(n_samples, seed, |rng| {
        let w = q.sample(rng);
        model.log_likelihood(data, &w)
    })?;
    let m = values.len() as f64;
    let data_fit = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - data_fit).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(ElboReport {
        value: data_fit - kl,
        data_fit,
        kl,
        std_error: (var / m).sqrt(),
        analytic: false,
    })
}

/// Evaluate `f` on `n` draws, chunk `c` using the stream `seed.child(c)`;
/// results are returned in draw order whatever the thread scheduling.
pub(crate) fn sample_map<T, F>(n: usize, seed: SeedSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha12Rng) -> Result<T> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.child(c as u64).rng();
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| f(&mut rng)).collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Rectangular Occam approximation `log p(𝒟|ŵ) + log(σ_{w|𝒟}/σ_w)` with
/// `ŵ` the posterior mode and widths taken as standard deviations.
pub fn occam_rectangular(model: &GaussianDensityModel, data: &OrderedDataset) -> Result<f64> {
    let sigma2 = model.sigma2();
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::invalid(
            "prior_variance",
            format!("must be > 0, got {sigma2}"),
        ));
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let post = model.posterior(data)?;
    let w_hat = post.mean()[0];
    let fit: f64 = data
        .scalars()?
        .iter()
        .map(|&x| GaussianDensityModel::point_log_likelihood(x, w_hat))
        .sum();
    Ok(fit + 0.5 * (post.variances()[0] / sigma2).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::PeriodicSineModel;
    use crate::model::finite_difference_hessian;
    use crate::oracle::log_integrate;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn one(x: f64) -> OrderedDataset {
        OrderedDataset::from_scalars(&[x])
    }

    #[test]
    fn sine_single_point() {
        let m = PeriodicSineModel::new(PI).unwrap();
        let r = laplace_evidence(&m, &one(0.5), &[0.0], HessianMode::Full).unwrap();
        assert!((r.w_map[0] - PI / 6.0).abs() < 1e-10);
        // Curvature of Σ log 𝒩(xᵢ; sin w, 1) at the exact fit is −cos²(π/6).
        let fd =
            finite_difference_hessian(|w| m.grad_log_likelihood(&one(0.5), w), &[PI / 6.0], 1e-5)
                .unwrap();
        assert!((fd[(0, 0)] + 0.75).abs() < 1e-8);
        assert!((r.log_det_sigma - (4.0f64 / 3.0).ln()).abs() < 1e-10);
        let want = -(2.0 * PI).ln() + 0.5 * (4.0f64 / 3.0).ln();
        assert!((r.log_evidence - want).abs() < 1e-10);
        let c = r.components;
        assert_eq!(
            r.log_evidence,
            c.log_lik_at_map + c.log_prior_at_map + c.gaussian_volume_term
        );
    }

    #[test]
    fn doubling_half_width_costs_log_two() {
        let d = OrderedDataset::from_scalars(&[0.5, 0.7, 0.2, 0.9, 0.4]);
        let mut prev: Option<f64> = None;
        for k in 0..5 {
            let m = PeriodicSineModel::new(PI * 2f64.powi(k)).unwrap();
            let r = laplace_evidence(&m, &d, &[0.0], HessianMode::Full).unwrap();
            if let Some(p) = prev {
                assert!((r.log_evidence - p + 2f64.ln()).abs() < 1e-12);
            }
            prev = Some(r.log_evidence);
        }
    }

    #[test]
    fn picks_lowest_norm_symmetric_mode() {
        // Starting near 2π + π/6 still reports the mode at π/6.
        let m = PeriodicSineModel::new(4.0 * PI).unwrap();
        let r = laplace_evidence(&m, &one(0.5), &[2.0 * PI + 0.4], HessianMode::Full).unwrap();
        assert!((r.w_map[0] - PI / 6.0).abs() < 1e-9, "{:?}", r.w_map);
    }

    #[test]
    fn boundary_optimum_is_typed() {
        // sin w = 1 requires w = π/2 but the support stops at 0.5.
        let m = PeriodicSineModel::new(0.5).unwrap();
        let err = laplace_evidence(&m, &one(3.0), &[0.0], HessianMode::Full).unwrap_err();
        assert_eq!(err, Error::BoundaryOptimum);
    }

    #[test]
    fn flat_curvature_is_typed() {
        // x = 0 with w at π/2: gradient 0, curvature −cos² − (0 − 1)·1 = 1 > 0
        // (a minimum), so start exactly there.
        let m = PeriodicSineModel::new(PI).unwrap();
        let d = OrderedDataset::from_scalars(&[0.0]);
        let h = m.hessian_log_likelihood(&d, &[PI / 2.0]).unwrap()[(0, 0)];
        assert!(h > 0.0);
        assert!(matches!(
            laplace_evidence(&m, &d, &[PI / 2.0], HessianMode::Full),
            Err(Error::DegenerateCurvature(_))
        ));
    }

    #[test]
    fn exact_on_gaussian_model() {
        let dm = GaussianDensityModel::new(0.3, 2.5).unwrap();
        let pm = dm.parameter_model().unwrap();
        let d = OrderedDataset::from_scalars(&[1.2, -0.4, 0.9, 2.2]);
        let exact = dm.lml(&d).unwrap().log_value;
        for mode in [HessianMode::Full, HessianMode::Diagonal] {
            let r = laplace_evidence(&pm, &d, &[0.0], mode).unwrap();
            assert!((r.log_evidence - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn bic_cases() {
        let m = PeriodicSineModel::new(PI).unwrap();
        let r = bic(&m, &one(0.5), &[0.0]).unwrap();
        assert_eq!(r.penalty, 0.0);
        assert!((r.value + 0.5 * LN_2PI).abs() < 1e-12);

        // Replicating the data 100× scales the fit by 100 and the penalty gap
        // between models of dimension 1 and 3 by ΔD·log 10.
        let dm = GaussianDensityModel::new(0.0, 1.0)
            .unwrap()
            .parameter_model()
            .unwrap();
        let xs = [0.3, 1.1, -0.2];
        let big: Vec<f64> = xs.iter().cycle().take(300).copied().collect();
        let small = bic(&dm, &OrderedDataset::from_scalars(&xs), &[0.0]).unwrap();
        let large = bic(&dm, &OrderedDataset::from_scalars(&big), &[0.0]).unwrap();
        assert!((large.max_log_likelihood - 100.0 * small.max_log_likelihood).abs() < 1e-9);
        assert!((large.penalty - small.penalty - 0.5 * 100f64.ln()).abs() < 1e-12);
        let gap = |n: f64| (3.0 - 1.0) / 2.0 * n.ln();
        assert!((gap(300.0) - gap(3.0) - 2.0 * 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn elbo_identities() {
        let dm = GaussianDensityModel::new(0.5, 1.7).unwrap();
        let pm = dm.parameter_model().unwrap();
        let d = OrderedDataset::from_scalars(&[1.0, 2.1, 0.4]);
        let post = dm.posterior(&d).unwrap();
        let lml = dm.lml(&d).unwrap().log_value;
        let e = elbo(&pm, &d, &post, 0, SeedSpec::new(0)).unwrap();
        assert!(e.analytic);
        assert!((e.value - lml).abs() < 1e-8);

        let prior = GaussianDistribution::univariate(0.5, 1.7).unwrap();
        let e = elbo(&pm, &d, &prior, 0, SeedSpec::new(0)).unwrap();
        assert_eq!(e.kl, 0.0);
        assert_eq!(e.value, e.data_fit);

        let q =
            GaussianDistribution::univariate(post.mean()[0] + 0.4, post.variances()[0]).unwrap();
        let e = elbo(&pm, &d, &q, 0, SeedSpec::new(0)).unwrap();
        let gap = kl_gaussian(&q, &post).unwrap();
        assert!((lml - e.value - gap).abs() < 1e-10);
    }

    /// The density model with the analytic data-fit term hidden.
    struct SampledDensity(crate::exact::DensityParameterModel);

    impl DifferentiableModel for SampledDensity {
        fn dim(&self) -> usize {
            1
        }
        fn prior(&self) -> &Prior {
            self.0.prior()
        }
        fn log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<f64> {
            self.0.log_likelihood(data, w)
        }
    }

    #[test]
    fn monte_carlo_elbo_is_a_bound() {
        let dm = GaussianDensityModel::new(0.0, 2.0).unwrap();
        let model = SampledDensity(dm.parameter_model().unwrap());
        let d = OrderedDataset::from_scalars(&[0.9, 1.4, 0.2, 1.1]);
        let lml = dm.lml(&d).unwrap().log_value;
        let post = dm.posterior(&d).unwrap();
        for (shift, var_scale) in [(0.0, 1.0), (0.5, 1.0), (-0.3, 2.0), (0.1, 0.3)] {
            let q = GaussianDistribution::univariate(
                post.mean()[0] + shift,
                post.variances()[0] * var_scale,
            )
            .unwrap();
            let e = elbo(&model, &d, &q, 20_000, SeedSpec::new(3)).unwrap();
            assert!(!e.analytic);
            let gap = kl_gaussian(&q, &post).unwrap();
            assert!(lml - e.value >= gap - 2.0 * e.std_error - 1e-12);
            assert!(e.value <= lml + 2.0 * e.std_error);
        }
        let a = elbo(&model, &d, &post, 5000, SeedSpec::new(9)).unwrap();
        let b = elbo(&model, &d, &post, 5000, SeedSpec::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn elbo_rejects_uniform_prior_and_bad_dims() {
        let m = PeriodicSineModel::new(PI).unwrap();
        let q = GaussianDistribution::univariate(0.0, 1.0).unwrap();
        assert!(matches!(
            elbo(&m, &one(0.1), &q, 100, SeedSpec::new(0)),
            Err(Error::Unsupported(_))
        ));
        let q2 = GaussianDistribution::diagonal(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            elbo(&m, &one(0.1), &q2, 100, SeedSpec::new(0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn occam_cases() {
        let d = OrderedDataset::from_scalars(&[0.5, 1.5, 0.7, 1.3]);
        let dm = GaussianDensityModel::new(1.0, 2.0).unwrap();
        let occam = occam_rectangular(&dm, &d).unwrap();
        assert!((occam - dm.lml(&d).unwrap().log_value).abs() < 1e-10);
        assert_eq!(
            occam_rectangular(&dm, &OrderedDataset::from_scalars(&[])).unwrap(),
            0.0
        );
        assert!(occam_rectangular(&GaussianDensityModel::point_mass(0.0), &d).is_err());

        let ratio = |s2: f64| {
            let m = GaussianDensityModel::new(1.0, s2).unwrap();
            0.5 * (m.posterior(&d).unwrap().variances()[0] / s2).ln()
        };
        let grid = [0.1, 1.0, 10.0, 100.0, 1000.0];
        assert!(grid.windows(2).all(|w| ratio(w[1]) < ratio(w[0])));
    }

    #[test]
    fn laplace_matches_quadrature_for_concentrated_posterior() {
        // With many points near a single mode the Laplace estimate converges
        // to the exact evidence of the periodic model.
        let m = PeriodicSineModel::new(PI / 2.0).unwrap();
        let xs: Vec<f64> = (0..400)
            .map(|i| 0.3 + 0.5 * ((i * 37 % 101) as f64 / 101.0 - 0.5))
            .collect();
        let d = OrderedDataset::from_scalars(&xs);
        let r = laplace_evidence(&m, &d, &[0.0], HessianMode::Full).unwrap();
        let exact = log_integrate(
            |w| m.log_joint(&d, &[w]).unwrap(),
            -PI / 2.0,
            PI / 2.0,
            200_000,
        );
        assert!((r.log_evidence - exact).abs() < 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn diagonal_equals_full_in_one_dimension(x in -1.5..1.5f64, y in -1.5..1.5f64, k in 1.0..4.0f64) {
            let m = PeriodicSineModel::new(k * PI).unwrap();
            let d = OrderedDataset::from_scalars(&[x, y]);
            let a = laplace_evidence(&m, &d, &[0.0], HessianMode::Full);
            let b = laplace_evidence(&m, &d, &[0.0], HessianMode::Diagonal);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!((a.log_evidence - b.log_evidence).abs() < 1e-14),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false),
            }
        }
    }
}
