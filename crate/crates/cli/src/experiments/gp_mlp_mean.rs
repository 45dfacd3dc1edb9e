//! Constant-mean vs MLP-mean GP after LML optimization: train-region
//! evidence against held-out joint density on the extrapolation region.

use evidence_core::gp::{
    fit_hypers, gp_generate, FitConfig, GPModel, HyperMask, KernelSpec, MeanFunction, MlpMean,
};
use evidence_core::{OrderedDataset, SeedSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, linspace, positive, range, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpMeanParams {
    pub seeds: usize,
    /// Evenly spaced points; the first half trains, the second half is held out.
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub lengthscale: f64,
    pub output_scale: f64,
    pub noise_std: f64,
    pub hidden: Vec<usize>,
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Seed index whose predictive curves are written out.
    pub plot_seed: usize,
}

impl Default for MlpMeanParams {
    fn default() -> Self {
        MlpMeanParams {
            seeds: 10,
            n: 100,
            x_min: 0.0,
            x_max: 10.0,
            lengthscale: 0.75,
            output_scale: 1.0,
            noise_std: 0.02,
            hidden: vec![50, 50],
            max_steps: 500,
            learning_rate: 0.05,
            plot_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: usize,
    pub model: String,
    pub lml_before: f64,
    pub lml_after: f64,
    /// `log p(y_test | train)` under the joint predictive.
    pub heldout_joint_log_density: f64,
    pub lengthscale: f64,
    pub noise_std: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveRow {
    pub model: String,
    pub region: String,
    pub x: f64,
    pub y: f64,
    pub pred_mean: f64,
    pub pred_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpMeanSummary {
    pub seeds: usize,
    /// Seeds where the MLP mean has the higher train LML and the lower held-out density.
    pub agreeing: usize,
    pub failed: usize,
}

pub struct MlpMeanOutput {
    pub per_seed: Vec<SeedRow>,
    pub predictive: Vec<PredictiveRow>,
    pub summary: MlpMeanSummary,
}

struct Fitted {
    row: SeedRow,
    model: Option<GPModel>,
}

fn fit_one(
    p: &MlpMeanParams,
    name: &str,
    init: GPModel,
    train: &OrderedDataset,
    test: &OrderedDataset,
    s: usize,
    seed: SeedSpec,
) -> Fitted {
    let cfg = FitConfig {
        free: HyperMask::all(),
        restarts: 1,
        max_steps: p.max_steps,
        learning_rate: p.learning_rate,
        seed,
        ..FitConfig::default()
    };
    let result = fit_hypers(&init, train, &cfg).and_then(|(m, trace)| {
        let xs: Vec<Vec<f64>> = test.iter().map(|q| q.x.clone()).collect();
        let held = m.predict(train, &xs, true)?.log_pdf(&test.targets()?)?;
        Ok((m, trace, held))
    });
    match result {
        Ok((m, trace, held)) => Fitted {
            row: SeedRow {
                seed: s,
                model: name.into(),
                lml_before: trace.initial_value,
                lml_after: trace.final_value,
                heldout_joint_log_density: held,
                lengthscale: m.kernel.lengthscale,
                noise_std: m.noise_std,
                error: String::new(),
            },
            model: Some(m),
        },
        Err(e) => Fitted {
            row: SeedRow {
                seed: s,
                model: name.into(),
                lml_before: f64::NAN,
                lml_after: f64::NAN,
                heldout_joint_log_density: f64::NAN,
                lengthscale: f64::NAN,
                noise_std: f64::NAN,
                error: e.to_string(),
            },
            model: None,
        },
    }
}

fn predictive_rows(
    name: &str,
    m: &GPModel,
    train: &OrderedDataset,
    all: &OrderedDataset,
) -> evidence_core::Result<Vec<PredictiveRow>> {
    let xs: Vec<Vec<f64>> = all.iter().map(|q| q.x.clone()).collect();
    let (mean, cov) = m.predictive_moments(train, &xs)?;
    let ys = all.targets()?;
    let s2 = m.noise_std * m.noise_std;
    Ok((0..xs.len())
        .map(|i| PredictiveRow {
            model: name.into(),
            region: if i < train.len() {
                "train"
            } else {
                "extrapolation"
            }
            .into(),
            x: xs[i][0],
            y: ys[i],
            pred_mean: mean[i],
            pred_sd: (cov[(i, i)].max(0.0) + s2).sqrt(),
        })
        .collect())
}

pub fn compute(p: &MlpMeanParams, seed: SeedSpec) -> CliResult<MlpMeanOutput> {
    let kernel = KernelSpec::rbf(p.lengthscale, p.output_scale);
    let truth = GPModel::new(kernel, p.noise_std, MeanFunction::Constant(0.0))?;
    let inputs: Vec<Vec<f64>> = linspace(p.x_min, p.x_max, p.n)
        .into_iter()
        .map(|x| vec![x])
        .collect();
    let mut widths = vec![1];
    widths.extend(&p.hidden);
    widths.push(1);

    let per_seed: Vec<(Vec<Fitted>, OrderedDataset)> = (0..p.seeds)
        .into_par_iter()
        .map(|s| {
            let ss = seed.child(s as u64);
            let all = gp_generate(&truth, &inputs, ss.child(0))?;
            let half = p.n / 2;
            let (train, test) = (all.prefix(half), all.suffix(half));
            let mlp = MlpMean::init(widths.clone(), ss.child(1))?;
            let constant = GPModel::new(kernel, p.noise_std, MeanFunction::Constant(0.0))?;
            let flexible = GPModel::new(kernel, p.noise_std, MeanFunction::Mlp(mlp))?;
            Ok((
                vec![
                    fit_one(p, "constant", constant, &train, &test, s, ss.child(2)),
                    fit_one(p, "mlp", flexible, &train, &test, s, ss.child(3)),
                ],
                all,
            ))
        })
        .collect::<CliResult<_>>()?;

    let mut agreeing = 0;
    let mut failed = 0;
    let mut predictive = Vec::new();
    for (s, (fits, all)) in per_seed.iter().enumerate() {
        let (c, m) = (&fits[0].row, &fits[1].row);
        if !c.error.is_empty() || !m.error.is_empty() {
            failed += 1;
        } else if m.lml_after > c.lml_after
            && m.heldout_joint_log_density < c.heldout_joint_log_density
        {
            agreeing += 1;
        }
        if s == p.plot_seed {
            let train = all.prefix(p.n / 2);
            for f in fits {
                if let Some(model) = &f.model {
                    predictive.extend(predictive_rows(&f.row.model, model, &train, all)?);
                }
            }
        }
    }
    Ok(MlpMeanOutput {
        per_seed: per_seed
            .into_iter()
            .flat_map(|(f, _)| f.into_iter().map(|x| x.row))
            .collect(),
        predictive,
        summary: MlpMeanSummary {
            seeds: p.seeds,
            agreeing,
            failed,
        },
    })
}

pub struct GpMlpMean;

impl Experiment for GpMlpMean {
    type Params = MlpMeanParams;

    fn validate(p: &MlpMeanParams) -> CliResult<()> {
        at_least("seeds", p.seeds, 1)?;
        at_least("n", p.n, 4)?;
        at_least("max_steps", p.max_steps, 1)?;
        range("x_max", p.x_min, p.x_max)?;
        positive("lengthscale", p.lengthscale)?;
        positive("output_scale", p.output_scale)?;
        positive("noise_std", p.noise_std)?;
        positive("learning_rate", p.learning_rate)?;
        if p.hidden.contains(&0) {
            return Err(CliError::config("hidden", "layer widths must be positive"));
        }
        Ok(())
    }

    fn artifacts(p: &MlpMeanParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![
                table("gp_mlp_mean.csv", &o.per_seed)?,
                table("gp_mlp_mean_predictive.csv", &o.predictive)?,
            ],
            summary: serde_json::to_value(&o.summary)?,
        })
    }
}
