//! Likelihood weighting and importance sampling on the Gaussian-mean model
//! against its closed-form evidence.

use evidence_core::exact::GaussianDensityModel;
use evidence_core::sampling::{
    importance_sampling, likelihood_weighting, log_weights, ProposalSpec,
};
use evidence_core::{EvidenceEstimate, GaussianDistribution, OrderedDataset, SeedSpec};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, positive, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingParams {
    pub n: usize,
    pub true_mean: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub runs: usize,
    pub sample_sizes: Vec<usize>,
    /// Variance multiplier of the widened posterior proposal.
    pub wide_factor: f64,
    /// LW counts as covering the reference within this many standard errors.
    pub coverage_sigmas: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            n: 20,
            true_mean: 0.5,
            prior_mean: 0.0,
            prior_variance: 1.0,
            runs: 100,
            sample_sizes: vec![100, 1000, 10000],
            wide_factor: 4.0,
            coverage_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub run: usize,
    pub method: String,
    pub n_samples: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub ess: f64,
    pub reference: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub n_samples: usize,
    pub covered: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    pub reference: f64,
    pub lw_coverage: Vec<Coverage>,
    /// Largest `|log wᵢ − LML|` with the exact posterior as proposal.
    pub max_posterior_log_weight_deviation: f64,
}

pub struct SamplingOutput {
    pub rows: Vec<SamplingRow>,
    pub summary: SamplingSummary,
}

pub const LW: &str = "likelihood_weighting";
pub const IS_POSTERIOR: &str = "is_posterior";
pub const IS_WIDE: &str = "is_wide";

pub fn dataset(p: &SamplingParams, seed: SeedSpec) -> OrderedDataset {
    let mut rng = seed.child(0).rng();
    let xs: Vec<f64> = (0..p.n)
        .map(|_| p.true_mean + rng.sample::<f64, _>(StandardNormal))
        .collect();
    OrderedDataset::from_scalars(&xs)
}

fn row(
    run: usize,
    method: &str,
    n_samples: usize,
    reference: f64,
    e: evidence_core::Result<EvidenceEstimate>,
) -> SamplingRow {
    let base = SamplingRow {
        run,
        method: method.into(),
        n_samples,
        estimate: f64::NAN,
        stderr: f64::NAN,
        ess: f64::NAN,
        reference,
        error: String::new(),
    };
    match e {
        Ok(e) => {
            let d = e.diagnostics.expect("sampled estimates carry diagnostics");
            SamplingRow {
                estimate: e.log_value,
                stderr: d.std_error,
                ess: d.effective_sample_size,
                ..base
            }
        }
        Err(err) => SamplingRow {
            error: err.to_string(),
            ..base
        },
    }
}

pub fn compute(p: &SamplingParams, seed: SeedSpec) -> CliResult<SamplingOutput> {
    let data = dataset(p, seed);
    let density = GaussianDensityModel::new(p.prior_mean, p.prior_variance)?;
    let reference = density.lml(&data)?.log_value;
    let model = density.parameter_model()?;
    let post = density.posterior(&data)?;
    let (mu, var) = (post.mean()[0], post.variances()[0]);
    let exact = ProposalSpec::gaussian(IS_POSTERIOR, post);
    let wide = ProposalSpec::gaussian(
        IS_WIDE,
        GaussianDistribution::univariate(mu, var * p.wide_factor)?,
    );

    let runs: Vec<Vec<SamplingRow>> = (0..p.runs)
        .into_par_iter()
        .map(|r| {
            let rs = seed.child(1).child(r as u64);
            let mut out = Vec::new();
            for (k, &s) in p.sample_sizes.iter().enumerate() {
                let ks = rs.child(k as u64);
                out.push(row(
                    r,
                    LW,
                    s,
                    reference,
                    likelihood_weighting(&model, &data, s, ks.child(0)),
                ));
                out.push(row(
                    r,
                    IS_POSTERIOR,
                    s,
                    reference,
                    importance_sampling(&model, &data, &exact, s, ks.child(1)),
                ));
                out.push(row(
                    r,
                    IS_WIDE,
                    s,
                    reference,
                    importance_sampling(&model, &data, &wide, s, ks.child(2)),
                ));
            }
            out
        })
        .collect();
    let rows: Vec<SamplingRow> = runs.into_iter().flatten().collect();

    let lw_coverage = p
        .sample_sizes
        .iter()
        .map(|&s| {
            let lw: Vec<&SamplingRow> = rows
                .iter()
                .filter(|r| r.method == LW && r.n_samples == s)
                .collect();
            Coverage {
                n_samples: s,
                covered: lw
                    .iter()
                    .filter(|r| {
                        r.error.is_empty()
                            && (r.estimate - reference).abs() <= p.coverage_sigmas * r.stderr
                    })
                    .count(),
                runs: lw.len(),
            }
        })
        .collect();

    let largest = p.sample_sizes.iter().copied().max().unwrap_or(0);
    let w = log_weights(&model, &data, &exact, largest, seed.child(2))?;
    let max_posterior_log_weight_deviation =
        w.iter().map(|v| (v - reference).abs()).fold(0.0, f64::max);

    Ok(SamplingOutput {
        rows,
        summary: SamplingSummary {
            reference,
            lw_coverage,
            max_posterior_log_weight_deviation,
        },
    })
}

pub struct SamplingCheck;

impl Experiment for SamplingCheck {
    type Params = SamplingParams;

    fn validate(p: &SamplingParams) -> CliResult<()> {
        at_least("n", p.n, 1)?;
        at_least("runs", p.runs, 1)?;
        positive("prior_variance", p.prior_variance)?;
        positive("wide_factor", p.wide_factor)?;
        positive("coverage_sigmas", p.coverage_sigmas)?;
        if p.sample_sizes.is_empty() || p.sample_sizes.contains(&0) {
            return Err(CliError::config(
                "sample_sizes",
                "need at least one positive size",
            ));
        }
        Ok(())
    }

    fn artifacts(p: &SamplingParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![table("sampling_check.csv", &o.rows)?],
            summary: serde_json::to_value(&o.summary)?,
        })
    }
}
