//! Bounded-loss instances built from the Gaussian-mean density model.
//!
//! The per-point negative log-likelihood is clipped to `[a, b]`, so the
//! boundedness hypothesis of the bounds holds by construction. The clipped
//! model's evidence `∫ p(u) Π exp(−ℓ_c(xᵢ, u)) du` and its Gibbs posterior
//! are computed on a quadrature grid split at the clipping kinks.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{germain_lml_bound, mcallester_bound, BoundInputs};
use crate::approx::sample_map;
use crate::data::{OrderedDataset, SeedSpec};
use crate::error::{Error, Result};
use crate::exact::GaussianDensityModel;
use crate::gaussian::{kl_gaussian, GaussianDistribution};
use crate::linalg::{log_normal_pdf, log_sum_exp, LN_2PI};

const GRID_TOL: f64 = 1e-10;
const GRID_MAX_NODES: usize = 1 << 22;

/// The density model with its per-point loss clipped to `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedDensity {
    pub model: GaussianDensityModel,
    pub a: f64,
    pub b: f64,
}

/// Quadrature nodes and log integrand values of the clipped joint.
struct Grid {
    nodes: Vec<f64>,
    log_f: Vec<f64>,
    log_z: f64,
}

impl ClippedDensity {
    pub fn new(model: GaussianDensityModel, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(
                "b",
                format!("need finite a < b, got a={a} b={b}"),
            ));
        }
        let s2 = model.sigma2();
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::invalid(
                "prior_variance",
                format!("must be finite and > 0, got {s2}"),
            ));
        }
        Ok(ClippedDensity { model, a, b })
    }

    pub fn loss(&self, x: f64, u: f64) -> f64 {
        (-GaussianDensityModel::point_log_likelihood(x, u)).clamp(self.a, self.b)
    }

    fn log_joint(&self, xs: &[f64], u: f64) -> f64 {
        let prior = log_normal_pdf(u, self.model.prior_mean, self.model.sigma2());
        prior - xs.iter().map(|&x| self.loss(x, u)).sum::<f64>()
    }

    /// Points where some `ℓ_c(xᵢ, ·)` has a kink.
    fn kinks(&self, xs: &[f64]) -> Vec<f64> {
        let floor = 0.5 * LN_2PI;
        let mut out = Vec::new();
        for t in [self.a, self.b] {
            if t > floor {
                let r = (2.0 * (t - floor)).sqrt();
                for &x in xs {
                    out.push(x - r);
                    out.push(x + r);
                }
            }
        }
        out
    }

    fn grid(&self, xs: &[f64]) -> Result<Grid> {
        let mu = self.model.prior_mean;
        let sd = self.model.sigma2().sqrt();
        let reach = (2.0 * (self.b - 0.5 * LN_2PI).max(0.0)).sqrt() + 1.0;
        let (xmin, xmax) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
                (l.min(x), h.max(x))
            });
        let lo = (mu - 12.0 * sd).min(xmin - reach);
        let hi = (mu + 12.0 * sd).max(xmax + reach);
        let mut cuts = vec![lo, hi];
        cuts.extend(self.kinks(xs).into_iter().filter(|&k| k > lo && k < hi));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|p, q| (*p - *q).abs() < 1e-12);

        let post_sd = 1.0 / (xs.len() as f64 + 1.0 / (sd * sd)).sqrt();
        let target = post_sd.min(sd) / 8.0;
        let mut panels: Vec<usize> = cuts
            .windows(2)
            .map(|w| {
                let p = ((w[1] - w[0]) / target).ceil() as usize;
                (p.max(4) + 1) & !1
            })
            .collect();
        let mut prev = self.simpson(xs, &cuts, &panels);
        loop {
            panels.iter_mut().for_each(|p| *p *= 2);
            let total: usize = panels.iter().sum();
            let cur = self.simpson(xs, &cuts, &panels);
            let change = (cur.log_z - prev.log_z).abs();
            if change < GRID_TOL {
                return Ok(cur);
            }
            if total * 2 > GRID_MAX_NODES {
                return Err(Error::QuadratureNotConverged {
                    last_change: change,
                    nodes: total + 1,
                });
            }
            prev = cur;
        }
    }

    fn simpson(&self, xs: &[f64], cuts: &[f64], panels: &[usize]) -> Grid {
        let mut nodes = Vec::new();
        let mut log_f = Vec::new();
        let mut terms = Vec::new();
        for (w, &p) in cuts.windows(2).zip(panels) {
            let h = (w[1] - w[0]) / p as f64;
            for i in 0..=p {
                let u = if i == p { w[1] } else { w[0] + i as f64 * h };
                let lf = self.log_joint(xs, u);
                let c = if i == 0 || i == p {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                terms.push(lf + (c * h / 3.0).ln());
                // Segment endpoints are shared; keep one copy on the grid.
                if i > 0 || nodes.is_empty() {
                    nodes.push(u);
                    log_f.push(lf);
                }
            }
        }
        Grid {
            nodes,
            log_f,
            log_z: log_sum_exp(&terms),
        }
    }
}

/// Log evidence of the clipped model.
pub fn clipped_log_evidence(clipped: &ClippedDensity, data: &OrderedDataset) -> Result<f64> {
    let xs = data.scalars()?;
    Ok(clipped.grid(&xs)?.log_z)
}

/// Sampler for the clipped model's posterior, piecewise uniform on grid cells.
struct GibbsSampler {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl GibbsSampler {
    fn new(grid: &Grid) -> Self {
        let top = grid.log_f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut cdf = Vec::with_capacity(grid.nodes.len() - 1);
        let mut acc = 0.0;
        for i in 0..grid.nodes.len() - 1 {
            let h = grid.nodes[i + 1] - grid.nodes[i];
            acc += 0.5 * h * ((grid.log_f[i] - top).exp() + (grid.log_f[i + 1] - top).exp());
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        GibbsSampler {
            nodes: grid.nodes.clone(),
            cdf,
        }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        let t: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < t).min(self.cdf.len() - 1);
        let s: f64 = rng.random();
        self.nodes[i] + s * (self.nodes[i + 1] - self.nodes[i])
    }
}

/// Inputs for both bound families on one clipped instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPacInputs {
    /// `q` = exact posterior of the unclipped model.
    pub mcallester: BoundInputs,
    /// Evidence of the clipped model.
    pub germain: BoundInputs,
    pub kl: f64,
    pub empirical_risk: f64,
    pub empirical_risk_std_error: f64,
    pub clipped_log_evidence: f64,
}

/// Estimate `E_q R̂_𝒟` by `n_samples` draws from the analytic posterior and
/// compute `KL(q‖p)` and the clipped evidence.
pub fn empirical_pac_inputs(
    model: &GaussianDensityModel,
    data: &OrderedDataset,
    a: f64,
    b: f64,
    delta: f64,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<EmpiricalPacInputs> {
    let clipped = ClippedDensity::new(*model, a, b)?;
    if data.is_empty() {
        return Err(Error::InvalidData(
            "bounds need at least one data point".into(),
        ));
    }
    if n_samples < 2 {
        return Err(Error::invalid("n_samples", "must be at least 2"));
    }
    let xs = data.scalars()?;
    let q = model.posterior(data)?;
    let prior = GaussianDistribution::univariate(model.prior_mean, model.sigma2())?;
    let kl = kl_gaussian(&q, &prior)?;
    let risks = sample_map(n_samples, seed, |rng| {
        let u = q.sample(rng)[0];
        Ok(xs.iter().map(|&x| clipped.loss(x, u)).sum::<f64>() / xs.len() as f64)
    })?;
    let (empirical_risk, empirical_risk_std_error) = mean_and_se(&risks);
    let log_z = clipped.grid(&xs)?.log_z;
    let n = xs.len();
    Ok(EmpiricalPacInputs {
        mcallester: BoundInputs::posterior(n, delta, a, b, kl, empirical_risk.clamp(a, b)),
        germain: BoundInputs::evidence(n, delta, a, b, log_z.min(-(n as f64) * a)),
        kl,
        empirical_risk,
        empirical_risk_std_error,
        clipped_log_evidence: log_z,
    })
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Frequentist check of the `1 − δ` guarantee on fresh data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageConfig {
    pub trials: usize,
    pub n: usize,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    /// Mean of the data-generating `𝒩(θ, 1)`.
    pub true_mean: f64,
    pub n_samples: usize,
    pub seed: SeedSpec,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            trials: 100,
            n: 50,
            delta: 0.05,
            a: 0.5 * LN_2PI,
            b: 5.0,
            prior_mean: 0.0,
            prior_variance: 1.0,
            true_mean: 0.5,
            n_samples: 10_000,
            seed: SeedSpec::new(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTrial {
    pub trial: usize,
    pub mcallester_bound: f64,
    pub germain_bound: f64,
    /// Held-out clipped risk of exact-posterior samples.
    pub heldout_risk_posterior: f64,
    /// Held-out clipped risk of clipped-model posterior samples.
    pub heldout_risk_gibbs: f64,
    pub mcallester_violated: bool,
    pub germain_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: Vec<CoverageTrial>,
    pub mcallester_violations: usize,
    pub germain_violations: usize,
}

/// Run `trials` independent datasets; trial `t` uses `seed.child(t)`.
pub fn coverage_trial(cfg: &CoverageConfig) -> Result<CoverageReport> {
    if cfg.trials == 0 || cfg.n == 0 {
        return Err(Error::invalid("trials", "trials and n must be at least 1"));
    }
    let model = GaussianDensityModel::new(cfg.prior_mean, cfg.prior_variance)?;
    let clipped = ClippedDensity::new(model, cfg.a, cfg.b)?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| one_trial(cfg, &model, &clipped, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoverageReport {
        mcallester_violations: trials.iter().filter(|t| t.mcallester_violated).count(),
        germain_violations: trials.iter().filter(|t| t.germain_violated).count(),
        trials,
    })
}

fn one_trial(
    cfg: &CoverageConfig,
    model: &GaussianDensityModel,
    clipped: &ClippedDensity,
    t: usize,
) -> Result<CoverageTrial> {
    let seed = cfg.seed.child(t as u64);
    let mut rng = seed.child(0).rng();
    let xs: Vec<f64> = (0..cfg.n)
        .map(|_| cfg.true_mean + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let data = OrderedDataset::from_scalars(&xs);
    let inputs = empirical_pac_inputs(
        model,
        &data,
        cfg.a,
        cfg.b,
        cfg.delta,
        cfg.n_samples,
        seed.child(1),
    )?;
    let mc = mcallester_bound(&inputs.mcallester)?.bound_value;
    let gm = germain_lml_bound(&inputs.germain)?.bound_value;

    let fresh = |rng: &mut ChaCha12Rng, u: f64| {
        let x = cfg.true_mean + rng.sample::<f64, _>(StandardNormal);
        clipped.loss(x, u)
    };
    let q = model.posterior(&data)?;
    let post = sample_map(cfg.n_samples, seed.child(2), |rng| {
        let u = q.sample(rng)[0];
        Ok(fresh(rng, u))
    })?;
    let sampler = GibbsSampler::new(&clipped.grid(&xs)?);
    let gibbs = sample_map(cfg.n_samples, seed.child(3), |rng| {
        let u = sampler.sample(rng);
        Ok(fresh(rng, u))
    })?;
    let heldout_risk_posterior = mean_and_se(&post).0;
    let heldout_risk_gibbs = mean_and_se(&gibbs).0;
    Ok(CoverageTrial {
        trial: t,
        mcallester_bound: mc,
        germain_bound: gm,
        heldout_risk_posterior,
        heldout_risk_gibbs,
        mcallester_violated: heldout_risk_posterior > mc,
        germain_violated: heldout_risk_gibbs > gm,
    })
}
