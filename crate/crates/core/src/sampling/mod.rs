//! Monte Carlo evidence estimators and a quadrature reference for one- and
//! two-dimensional parameter spaces.
//!
//! All accumulation happens in the log domain.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::approx::optimize::maximize;
use crate::approx::sample_map;
use crate::data::{OrderedDataset, SeedSpec};
use crate::error::{Error, Result};
use crate::evidence::{Diagnostics, EvidenceEstimate, Method};
use crate::gaussian::GaussianDistribution;
use crate::linalg::log_sum_exp;
use crate::model::{DifferentiableModel, Prior};

#[derive(Debug, Clone)]
pub enum Proposal {
    /// Sample from the model's own prior; weights reduce to likelihoods.
    Prior,
    Gaussian(GaussianDistribution),
}

#[derive(Debug, Clone)]
pub struct ProposalSpec {
    pub proposal: Proposal,
    pub label: String,
}

impl ProposalSpec {
    pub fn prior() -> Self {
        ProposalSpec {
            proposal: Proposal::Prior,
            label: "prior".into(),
        }
    }

    pub fn gaussian(label: impl Into<String>, q: GaussianDistribution) -> Self {
        ProposalSpec {
            proposal: Proposal::Gaussian(q),
            label: label.into(),
        }
    }
}

/// ESS below which an estimate is flagged unreliable.
pub const MIN_RELIABLE_ESS: f64 = 2.0;

/// Per-sample log weights `log p(𝒟|w) + log p(w) − log q(w)`, `w ~ q`.
///
/// Draw `i` comes from the stream of chunk `⌊i/1024⌋`, so results do not
/// depend on thread count. With the prior as proposal the weight is exactly
/// the log-likelihood.
pub fn log_weights<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    proposal: &ProposalSpec,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    let prior = model.prior();
    match &proposal.proposal {
        Proposal::Prior => sample_map(n_samples, seed, |rng| {
            let w = prior.sample(rng);
            model.log_likelihood(data, &w)
        }),
        Proposal::Gaussian(q) => {
            if q.dim() != model.dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    actual: q.dim(),
                });
            }
            sample_map(n_samples, seed, |rng| {
                let w = q.sample(rng);
                let lp = prior.log_density(&w);
                if lp == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(model.log_likelihood(data, &w)? + lp - q.log_pdf(&w)?)
            })
        }
    }
}

/// Estimate `log mean exp(log_weights)` with ESS and a delta-method log
/// standard error.
pub fn estimate_from_log_weights(log_w: &[f64], method: Method) -> Result<EvidenceEstimate> {
    let m = log_w.len();
    if m == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateEstimate);
    }
    let u: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = u.iter().sum();
    let sum2: f64 = u.iter().map(|v| v * v).sum();
    let mean = sum / m as f64;
    let ess = sum * sum / sum2;
    let std_error = if m > 1 {
        let var = u.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt() / mean
    } else {
        f64::INFINITY
    };
    Ok(EvidenceEstimate::sampled(
        log_sum_exp(log_w) - (m as f64).ln(),
        method,
        Diagnostics {
            std_error,
            effective_sample_size: ess,
            n_samples: m,
            unreliable: ess < MIN_RELIABLE_ESS,
        },
    ))
}

/// `log (1/m) Σ p(𝒟|wᵢ)`, `wᵢ ~ p(w)`.
pub fn likelihood_weighting<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<EvidenceEstimate> {
    let w = log_weights(model, data, &ProposalSpec::prior(), n_samples, seed)?;
    estimate_from_log_weights(&w, Method::LikelihoodWeighting)
}

/// `log (1/m) Σ p(𝒟|wᵢ) p(wᵢ) / q(wᵢ)`, `wᵢ ~ q`. A prior proposal gives
/// exactly the likelihood-weighting estimate for the same seed.
pub fn importance_sampling<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    proposal: &ProposalSpec,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<EvidenceEstimate> {
    let w = log_weights(model, data, proposal, n_samples, seed)?;
    let method = match proposal.proposal {
        Proposal::Prior => Method::LikelihoodWeighting,
        Proposal::Gaussian(_) => Method::ImportanceSampling,
    };
    estimate_from_log_weights(&w, method)
}

/// Largest number of Simpson panels per axis tried before giving up.
pub const QUADRATURE_MAX_PANELS_1D: usize = 1 << 22;
pub const QUADRATURE_MAX_PANELS_2D: usize = 1 << 11;
/// Absolute change in the log evidence accepted as converged.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// Composite Simpson quadrature of `p(𝒟|w) p(w)` for `D ≤ 2`, doubling the
/// number of panels per axis (starting from `resolution`) until successive
/// log values differ by less than 1e-8.
///
/// The domain is the prior box for uniform priors. For Gaussian priors it
/// is prior mean ± 8 prior sd, widened to cover ± 12 Laplace sd around the
/// MAP when the likelihood pulls the posterior into the prior tail; the
/// starting resolution is raised so that the panel width does not exceed a
/// quarter of the Laplace sd.
pub fn quadrature_evidence<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    resolution: usize,
) -> Result<EvidenceEstimate> {
    let d = model.dim();
    if d == 0 || d > 2 {
        return Err(Error::Unsupported(format!(
            "quadrature supports 1 or 2 parameters, got {d}"
        )));
    }
    let (bounds, min_panels) = domain(model, data)?;
    let f = |w: &[f64]| model.log_joint(data, w);
    let mut panels = resolution.max(min_panels).max(2);
    panels += panels % 2;
    let max_panels = if d == 1 {
        QUADRATURE_MAX_PANELS_1D
    } else {
        QUADRATURE_MAX_PANELS_2D
    };
    let mut prev = simpson_log(&f, &bounds, panels)?;
    let mut last_change = f64::INFINITY;
    while panels * 2 <= max_panels {
        panels *= 2;
        let cur = simpson_log(&f, &bounds, panels)?;
        if cur == f64::NEG_INFINITY && prev == f64::NEG_INFINITY {
            return Ok(EvidenceEstimate::quadrature(cur));
        }
        last_change = (cur - prev).abs();
        if last_change < QUADRATURE_TOL {
            return Ok(EvidenceEstimate::quadrature(cur));
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged {
        last_change,
        nodes: panels + 1,
    })
}

fn domain<M: DifferentiableModel + ?Sized>(
    model: &M,
    data: &OrderedDataset,
) -> Result<(Vec<(f64, f64)>, usize)> {
    let prior = model.prior();
    let mut bounds = prior.integration_bounds();
    let Prior::Gaussian(g) = prior else {
        return Ok((bounds, 0));
    };
    let found = maximize(
        |w| model.log_joint(data, w),
        |w| {
            let mut gr = model.grad_log_likelihood(data, w)?;
            for (a, b) in gr.iter_mut().zip(prior.grad_log_density(w)) {
                *a += b;
            }
            Ok(gr)
        },
        |w| Ok(model.hessian_log_likelihood(data, w)? + prior.hessian_log_density()),
        g.mean().as_slice(),
        200,
    )?;
    let neg_h: DMatrix<f64> =
        -(model.hessian_log_likelihood(data, &found.w)? + prior.hessian_log_density());
    let Some(cov) = neg_h.try_inverse() else {
        return Ok((bounds, 0));
    };
    let mut min_panels = 0;
    for (i, b) in bounds.iter_mut().enumerate() {
        let sd = cov[(i, i)];
        if !(sd > 0.0 && sd.is_finite()) {
            continue;
        }
        let sd = sd.sqrt();
        b.0 = b.0.min(found.w[i] - 12.0 * sd);
        b.1 = b.1.max(found.w[i] + 12.0 * sd);
        let need = ((b.1 - b.0) / (0.25 * sd)).ceil() as usize;
        min_panels = min_panels.max(need);
    }
    Ok((bounds, min_panels))
}

fn simpson_weights(panels: usize) -> Vec<f64> {
    (0..=panels)
        .map(|i| {
            if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect()
}

fn simpson_log<F>(f: &F, bounds: &[(f64, f64)], panels: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let w = simpson_weights(panels);
    let axes: Vec<(Vec<f64>, f64)> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let h = (hi - lo) / panels as f64;
            ((0..=panels).map(|i| lo + i as f64 * h).collect(), h / 3.0)
        })
        .collect();
    let mut terms = Vec::new();
    match axes.as_slice() {
        [(xs, s)] => {
            for (i, x) in xs.iter().enumerate() {
                terms.push(f(&[*x])? + (w[i] * s).ln());
            }
        }
        [(xs, sx), (ys, sy)] => {
            for (i, x) in xs.iter().enumerate() {
                for (j, y) in ys.iter().enumerate() {
                    terms.push(f(&[*x, *y])? + (w[i] * sx * w[j] * sy).ln());
                }
            }
        }
        _ => unreachable!("dimension checked by caller"),
    }
    Ok(log_sum_exp(&terms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub method: Method,
    pub label: String,
    pub n_samples: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub effective_sample_size: f64,
    pub unreliable: bool,
}

impl EstimatorRow {
    pub fn from_estimate(label: impl Into<String>, e: &EvidenceEstimate) -> Self {
        let d = e.diagnostics.unwrap_or(Diagnostics {
            std_error: 0.0,
            effective_sample_size: f64::NAN,
            n_samples: 0,
            unreliable: false,
        });
        EstimatorRow {
            method: e.method,
            label: label.into(),
            n_samples: d.n_samples,
            estimate: e.log_value,
            std_error: d.std_error,
            effective_sample_size: d.effective_sample_size,
            unreliable: d.unreliable,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{GaussianDensityModel, PeriodicSineModel};
    use crate::oracle::log_integrate;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// `p(𝒟|w)` independent of `w`.
    struct Flat {
        prior: Prior,
        c: f64,
    }

    impl DifferentiableModel for Flat {
        fn dim(&self) -> usize {
            1
        }
        fn prior(&self) -> &Prior {
            &self.prior
        }
        fn log_likelihood(&self, _: &OrderedDataset, _: &[f64]) -> Result<f64> {
            Ok(self.c)
        }
    }

    /// Two independent Gaussian-mean parameters with 𝒩(0, 1) priors.
    struct Pair;

    impl DifferentiableModel for Pair {
        fn dim(&self) -> usize {
            2
        }
        fn prior(&self) -> &Prior {
            static P: std::sync::OnceLock<Prior> = std::sync::OnceLock::new();
            P.get_or_init(|| {
                Prior::Gaussian(
                    GaussianDistribution::diagonal(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
                )
            })
        }
        fn log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<f64> {
            Ok(data
                .iter()
                .map(|p| {
                    crate::linalg::log_normal_pdf(p.x[0], w[0], 1.0)
                        + crate::linalg::log_normal_pdf(p.x[1], w[1], 1.0)
                })
                .sum())
        }
    }

    fn sine_data(n: usize, w: f64) -> OrderedDataset {
        let xs: Vec<f64> = (0..n)
            .map(|i| w.sin() + 0.8 * (((i * 53) % 97) as f64 / 97.0 - 0.5))
            .collect();
        OrderedDataset::from_scalars(&xs)
    }

    #[test]
    fn constant_likelihood_is_exact() {
        let m = Flat {
            prior: Prior::uniform(vec![-1.0], vec![2.0]).unwrap(),
            c: -3.7,
        };
        let d = OrderedDataset::from_scalars(&[]);
        let e = likelihood_weighting(&m, &d, 5000, SeedSpec::new(1)).unwrap();
        assert!((e.log_value + 3.7).abs() < 1e-12);
        assert_eq!(e.std_error(), 0.0);
        assert!((e.diagnostics.unwrap().effective_sample_size - 5000.0).abs() < 1e-6);
    }

    #[test]
    fn likelihood_weighting_on_density_model() {
        let dm = GaussianDensityModel::new(0.0, 1.0).unwrap();
        let d = OrderedDataset::from_scalars(&[0.3, -0.8, 1.1]);
        let e = likelihood_weighting(
            &dm.parameter_model().unwrap(),
            &d,
            100_000,
            SeedSpec::new(2),
        )
        .unwrap();
        let exact = dm.lml(&d).unwrap().log_value;
        assert!((e.log_value - exact).abs() < 3.0 * e.std_error());
    }

    #[test]
    fn posterior_proposal_has_constant_weights() {
        let dm = GaussianDensityModel::new(0.4, 2.0).unwrap();
        let d = OrderedDataset::from_scalars(&[1.3, 0.2, 2.2, 0.9]);
        let q = ProposalSpec::gaussian("posterior", dm.posterior(&d).unwrap());
        let pm = dm.parameter_model().unwrap();
        let exact = dm.lml(&d).unwrap().log_value;
        let w = log_weights(&pm, &d, &q, 2000, SeedSpec::new(3)).unwrap();
        assert!(w.iter().all(|v| (v - exact).abs() < 1e-10));
        let e = importance_sampling(&pm, &d, &q, 2000, SeedSpec::new(3)).unwrap();
        assert!(e.std_error() < 1e-10);
        assert_eq!(e.method, Method::ImportanceSampling);
    }

    #[test]
    fn prior_proposal_reproduces_likelihood_weighting() {
        let m = PeriodicSineModel::new(2.0 * PI).unwrap();
        let d = sine_data(10, 0.7);
        let a = likelihood_weighting(&m, &d, 3000, SeedSpec::new(4)).unwrap();
        let b =
            importance_sampling(&m, &d, &ProposalSpec::prior(), 3000, SeedSpec::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sine_estimators_agree_with_quadrature() {
        let m = PeriodicSineModel::new(2.0 * PI).unwrap();
        let d = sine_data(8, 0.9);
        let exact = quadrature_evidence(&m, &d, 64).unwrap().log_value;
        let lw = likelihood_weighting(&m, &d, 50_000, SeedSpec::new(5)).unwrap();
        assert!((lw.log_value - exact).abs() < 3.0 * lw.std_error());
        let wide =
            ProposalSpec::gaussian("wide", GaussianDistribution::univariate(0.0, 16.0).unwrap());
        let is = importance_sampling(&m, &d, &wide, 50_000, SeedSpec::new(6)).unwrap();
        assert!((is.log_value - exact).abs() < 3.0 * is.std_error());
    }

    #[test]
    fn zero_likelihood_everywhere_is_degenerate() {
        let m = Flat {
            prior: Prior::uniform(vec![0.0], vec![1.0]).unwrap(),
            c: f64::NEG_INFINITY,
        };
        let d = OrderedDataset::from_scalars(&[]);
        assert_eq!(
            likelihood_weighting(&m, &d, 10, SeedSpec::new(0)),
            Err(Error::DegenerateEstimate)
        );
    }

    #[test]
    fn single_dominant_weight_is_flagged() {
        let e =
            estimate_from_log_weights(&[0.0, -800.0, -900.0], Method::ImportanceSampling).unwrap();
        assert!(e.diagnostics.unwrap().unreliable);
        let e = estimate_from_log_weights(&[0.0, 0.1, -0.2], Method::ImportanceSampling).unwrap();
        assert!(!e.diagnostics.unwrap().unreliable);
    }

    #[test]
    fn estimate_is_invariant_to_sample_order() {
        let w = [-3.0, -1.2, -7.5, -0.4, -2.2];
        let mut r = w;
        r.reverse();
        let a = estimate_from_log_weights(&w, Method::ImportanceSampling).unwrap();
        let b = estimate_from_log_weights(&r, Method::ImportanceSampling).unwrap();
        assert!((a.log_value - b.log_value).abs() < 1e-14);
        assert!((a.std_error() - b.std_error()).abs() < 1e-14);
    }

    #[test]
    fn quadrature_zero_data_and_two_dimensions() {
        let dm = GaussianDensityModel::new(1.0, 3.0)
            .unwrap()
            .parameter_model()
            .unwrap();
        let e = quadrature_evidence(&dm, &OrderedDataset::from_scalars(&[]), 16).unwrap();
        assert!(e.log_value.abs() < 1e-8);

        let d = OrderedDataset::new(vec![
            crate::data::Point {
                x: vec![0.5, -1.0],
                y: None,
            },
            crate::data::Point {
                x: vec![1.5, 0.2],
                y: None,
            },
        ]);
        let q = quadrature_evidence(&Pair, &d, 32).unwrap().log_value;
        let col =
            |k: usize| OrderedDataset::from_scalars(&d.iter().map(|p| p.x[k]).collect::<Vec<_>>());
        let unit = GaussianDensityModel::new(0.0, 1.0).unwrap();
        let exact = unit.lml(&col(0)).unwrap().log_value + unit.lml(&col(1)).unwrap().log_value;
        assert!((q - exact).abs() < 1e-8);
    }

    #[test]
    fn quadrature_covers_posterior_in_prior_tail() {
        let dm = GaussianDensityModel::new(0.0, 0.01).unwrap();
        let d = OrderedDataset::from_scalars(&[5.0; 20]);
        let q = quadrature_evidence(&dm.parameter_model().unwrap(), &d, 16)
            .unwrap()
            .log_value;
        assert!((q - dm.lml(&d).unwrap().log_value).abs() < 1e-8);
    }

    #[test]
    fn quadrature_is_roughly_constant_over_whole_periods() {
        let d = sine_data(20, 1.1);
        let a = quadrature_evidence(&PeriodicSineModel::new(2.0 * PI).unwrap(), &d, 64)
            .unwrap()
            .log_value;
        let b = quadrature_evidence(&PeriodicSineModel::new(4.0 * PI).unwrap(), &d, 64)
            .unwrap()
            .log_value;
        assert!((a - b).abs() < 0.05);
        let oracle = log_integrate(
            |w| {
                PeriodicSineModel::new(2.0 * PI)
                    .unwrap()
                    .log_joint_at(&d, w)
                    .unwrap()
            },
            -2.0 * PI,
            2.0 * PI,
            400_000,
        );
        assert!((a - oracle).abs() < 1e-8);
    }

    #[test]
    fn rejects_high_dimensional_quadrature() {
        struct Three(Prior);
        impl DifferentiableModel for Three {
            fn dim(&self) -> usize {
                3
            }
            fn prior(&self) -> &Prior {
                &self.0
            }
            fn log_likelihood(&self, _: &OrderedDataset, _: &[f64]) -> Result<f64> {
                Ok(0.0)
            }
        }
        let m = Three(Prior::uniform(vec![0.0; 3], vec![1.0; 3]).unwrap());
        assert!(matches!(
            quadrature_evidence(&m, &OrderedDataset::from_scalars(&[]), 8),
            Err(Error::Unsupported(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn quadrature_matches_closed_form(mu in -2.0..2.0f64, s2 in 0.01..1000.0f64,
                                          xs in prop::collection::vec(-4.0..4.0f64, 0..20)) {
            let dm = GaussianDensityModel::new(mu, s2).unwrap();
            let d = OrderedDataset::from_scalars(&xs);
            let q = quadrature_evidence(&dm.parameter_model().unwrap(), &d, 32).unwrap().log_value;
            let exact = dm.lml(&d).unwrap().log_value;
            prop_assert!((q - exact).abs() < 1e-8 * exact.abs().max(1.0), "{q} vs {exact}");
        }
    }
}
