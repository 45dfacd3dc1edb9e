//! LML, CLML and held-out log likelihood of RQ-kernel GPs over a grid of α,
//! for correct and over-estimated noise, averaged over replicate datasets.

use evidence_core::gp::{gp_generate, GPModel, KernelSpec, MeanFunction};
use evidence_core::{OrderedDataset, Orderings, SeedSpec};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, at_least, logspace, mean_se, positive, range, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RqParams {
    pub replicates: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub true_alpha: f64,
    pub lengthscale: f64,
    pub output_scale: f64,
    pub true_noise: f64,
    pub model_noises: Vec<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub grid_points: usize,
    pub m: usize,
    pub orderings: usize,
}

impl Default for RqParams {
    fn default() -> Self {
        RqParams {
            replicates: 50,
            n_train: 50,
            n_test: 200,
            x_min: 0.0,
            x_max: 4.0,
            true_alpha: 0.05,
            lengthscale: 0.5,
            output_scale: 1.0,
            true_noise: 0.1,
            model_noises: vec![0.1, 0.2],
            alpha_min: 1e-3,
            alpha_max: 10.0,
            grid_points: 40,
            m: 45,
            orderings: 20,
        }
    }
}

/// Means over replicates; `test_ll` is the mean per-point log predictive density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqRow {
    pub sigma: f64,
    pub alpha: f64,
    pub lml: f64,
    pub clml: f64,
    pub test_ll: f64,
    pub lml_stderr: f64,
    pub clml_stderr: f64,
    pub test_ll_stderr: f64,
    pub failures: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub sigma: f64,
    pub argmax_lml: usize,
    pub argmax_clml: usize,
    pub argmax_test_ll: usize,
    pub alpha_lml: f64,
    pub alpha_clml: f64,
    pub alpha_test_ll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqSummary {
    pub alphas: Vec<f64>,
    pub by_noise: Vec<NoiseSummary>,
}

pub struct RqOutput {
    pub rows: Vec<RqRow>,
    pub summary: RqSummary,
}

struct Replicate {
    train: OrderedDataset,
    test: OrderedDataset,
    orderings: Orderings,
}

fn replicate(p: &RqParams, truth: &GPModel, seed: SeedSpec) -> evidence_core::Result<Replicate> {
    let mut rng = seed.child(0).rng();
    let inputs: Vec<Vec<f64>> = (0..p.n_train + p.n_test)
        .map(|_| vec![rng.random_range(p.x_min..p.x_max)])
        .collect();
    let all = gp_generate(truth, &inputs, seed.child(1))?;
    Ok(Replicate {
        train: all.prefix(p.n_train),
        test: all.suffix(p.n_train),
        orderings: Orderings::random(p.orderings, seed.child(2)),
    })
}

/// `(lml, clml, test_ll)` for one model on one replicate.
fn score(model: &GPModel, r: &Replicate, m: usize) -> evidence_core::Result<[f64; 3]> {
    let lml = model.lml(&r.train)?.log_value;
    let clml = model.clml(&r.train, m, r.orderings)?.estimate.log_value;
    let pw = model.pointwise_log_predictive(&r.train, &r.test)?;
    Ok([lml, clml, pw.iter().sum::<f64>() / pw.len() as f64])
}

pub fn compute(p: &RqParams, seed: SeedSpec) -> CliResult<RqOutput> {
    let truth = GPModel::new(
        KernelSpec::rq(p.lengthscale, p.output_scale, p.true_alpha),
        p.true_noise,
        MeanFunction::Constant(0.0),
    )?;
    let reps: Vec<Replicate> = (0..p.replicates)
        .into_par_iter()
        .map(|r| replicate(p, &truth, seed.child(r as u64)))
        .collect::<evidence_core::Result<_>>()?;
    let alphas = logspace(p.alpha_min, p.alpha_max, p.grid_points);

    let mut rows = Vec::new();
    let mut by_noise = Vec::new();
    for &sigma in &p.model_noises {
        let block: Vec<RqRow> = alphas
            .par_iter()
            .map(|&alpha| {
                let model = GPModel::new(
                    KernelSpec::rq(p.lengthscale, p.output_scale, alpha),
                    sigma,
                    MeanFunction::Constant(0.0),
                );
                let results: Vec<evidence_core::Result<[f64; 3]>> = match &model {
                    Ok(model) => reps.iter().map(|r| score(model, r, p.m)).collect(),
                    Err(e) => vec![Err(e.clone())],
                };
                let ok: Vec<[f64; 3]> = results
                    .iter()
                    .filter_map(|r| r.as_ref().ok().copied())
                    .collect();
                let first_err = results
                    .iter()
                    .find_map(|r| r.as_ref().err())
                    .map(|e| e.to_string());
                let col = |j: usize| mean_se(&ok.iter().map(|v| v[j]).collect::<Vec<_>>());
                let (lml, lml_se) = col(0);
                let (clml, clml_se) = col(1);
                let (tll, tll_se) = col(2);
                RqRow {
                    sigma,
                    alpha,
                    lml,
                    clml,
                    test_ll: tll,
                    lml_stderr: lml_se,
                    clml_stderr: clml_se,
                    test_ll_stderr: tll_se,
                    failures: results.len() - ok.len(),
                    error: first_err.unwrap_or_default(),
                }
            })
            .collect();
        let pick = |f: fn(&RqRow) -> f64| argmax(&block.iter().map(f).collect::<Vec<_>>());
        let (Some(il), Some(ic), Some(it)) =
            (pick(|r| r.lml), pick(|r| r.clml), pick(|r| r.test_ll))
        else {
            return Err(CliError::Numerical(format!(
                "every α failed at σ = {sigma}"
            )));
        };
        by_noise.push(NoiseSummary {
            sigma,
            argmax_lml: il,
            argmax_clml: ic,
            argmax_test_ll: it,
            alpha_lml: alphas[il],
            alpha_clml: alphas[ic],
            alpha_test_ll: alphas[it],
        });
        rows.extend(block);
    }
    Ok(RqOutput {
        rows,
        summary: RqSummary { alphas, by_noise },
    })
}

pub struct GpRq;

impl Experiment for GpRq {
    type Params = RqParams;

    fn validate(p: &RqParams) -> CliResult<()> {
        at_least("replicates", p.replicates, 1)?;
        at_least("n_train", p.n_train, 2)?;
        at_least("n_test", p.n_test, 1)?;
        at_least("grid_points", p.grid_points, 2)?;
        at_least("orderings", p.orderings, 1)?;
        range("x_max", p.x_min, p.x_max)?;
        for (k, v) in [
            ("true_alpha", p.true_alpha),
            ("lengthscale", p.lengthscale),
            ("output_scale", p.output_scale),
            ("true_noise", p.true_noise),
            ("alpha_min", p.alpha_min),
        ] {
            positive(k, v)?;
        }
        range("alpha_max", p.alpha_min, p.alpha_max)?;
        if p.model_noises.is_empty() {
            return Err(CliError::config("model_noises", "need at least one value"));
        }
        for s in &p.model_noises {
            positive("model_noises", *s)?;
        }
        if p.m < 1 || p.m > p.n_train {
            return Err(CliError::config(
                "m",
                format!("must lie in [1, {}]", p.n_train),
            ));
        }
        Ok(())
    }

    fn artifacts(p: &RqParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![table("gp_rq.csv", &o.rows)?],
            summary: serde_json::to_value(&o.summary)?,
        })
    }
}
