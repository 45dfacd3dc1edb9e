//! Lengthscales learned by LML and CLML on prefixes of RBF-GP datasets.

use evidence_core::gp::{
    fit_hypers, gp_generate, FitConfig, GPModel, HyperMask, KernelSpec, MeanFunction, Objective,
};
use evidence_core::{OrderedDataset, Orderings, SeedSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{at_least, mean_se, positive, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbfBiasParams {
    pub datasets: usize,
    /// Inputs are the positions 1..=positions.
    pub positions: usize,
    pub n_values: Vec<usize>,
    pub true_lengthscale: f64,
    pub output_scale: f64,
    pub noise_std: f64,
    pub clml: bool,
    /// CLML cut-off `m = ⌈fraction·n⌉`, clamped to [2, n].
    pub clml_m_fraction: f64,
    pub clml_orderings: usize,
    pub max_steps: usize,
}

impl Default for RbfBiasParams {
    fn default() -> Self {
        RbfBiasParams {
            datasets: 100,
            positions: 150,
            n_values: vec![5, 10, 15, 20, 30, 50, 75, 100, 150],
            true_lengthscale: 4.0,
            output_scale: 1.0,
            noise_std: 0.2,
            clml: true,
            clml_m_fraction: 0.8,
            clml_orderings: 5,
            max_steps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub dataset: usize,
    pub n: usize,
    pub lengthscale_lml: Option<f64>,
    pub lengthscale_clml: Option<f64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub n: usize,
    pub mean_log_lengthscale_lml: f64,
    pub stderr_lml: f64,
    pub mean_log_lengthscale_clml: Option<f64>,
    pub stderr_clml: Option<f64>,
    /// Arithmetic mean of the learned lengthscales.
    pub mean_lengthscale_lml: f64,
    pub mean_lengthscale_clml: Option<f64>,
    pub failures: usize,
    pub error: String,
}

pub struct RbfBiasOutput {
    pub rows: Vec<BiasRow>,
    pub fits: Vec<FitRow>,
}

pub fn clml_m(p: &RbfBiasParams, n: usize) -> usize {
    ((p.clml_m_fraction * n as f64).ceil() as usize).clamp(2.min(n), n)
}

fn truth(p: &RbfBiasParams) -> evidence_core::Result<GPModel> {
    GPModel::new(
        KernelSpec::rbf(p.true_lengthscale, p.output_scale),
        p.noise_std,
        MeanFunction::Constant(0.0),
    )
}

fn fit(
    model: &GPModel,
    data: &OrderedDataset,
    objective: Objective,
    p: &RbfBiasParams,
) -> evidence_core::Result<f64> {
    let cfg = FitConfig {
        objective,
        free: HyperMask::lengthscale_only(),
        restarts: 1,
        max_steps: p.max_steps,
        ..FitConfig::default()
    };
    Ok(fit_hypers(model, data, &cfg)?.0.kernel.lengthscale)
}

fn one_dataset(
    p: &RbfBiasParams,
    model: &GPModel,
    d: usize,
    seed: SeedSpec,
) -> CliResult<Vec<FitRow>> {
    let inputs: Vec<Vec<f64>> = (1..=p.positions).map(|i| vec![i as f64]).collect();
    let ds = seed.child(d as u64);
    let data = gp_generate(model, &inputs, ds.child(0))?;
    Ok(p.n_values
        .iter()
        .map(|&n| {
            let prefix = data.prefix(n);
            let lml = fit(model, &prefix, Objective::Lml, p);
            let clml = if p.clml {
                let objective = Objective::Clml {
                    m: clml_m(p, n),
                    orderings: Orderings::random(p.clml_orderings, ds.child(1 + n as u64)),
                };
                Some(fit(model, &prefix, objective, p))
            } else {
                None
            };
            let mut error = super::error_text(&lml);
            if let Some(Err(e)) = &clml {
                if !error.is_empty() {
                    error.push_str("; ");
                }
                error.push_str(&e.to_string());
            }
            FitRow {
                dataset: d,
                n,
                lengthscale_lml: lml.ok(),
                lengthscale_clml: clml.and_then(|r| r.ok()),
                error,
            }
        })
        .collect())
}

pub fn compute(p: &RbfBiasParams, seed: SeedSpec) -> CliResult<RbfBiasOutput> {
    let model = truth(p)?;
    let per_dataset: Vec<Vec<FitRow>> = (0..p.datasets)
        .into_par_iter()
        .map(|d| one_dataset(p, &model, d, seed))
        .collect::<CliResult<_>>()?;
    let fits: Vec<FitRow> = per_dataset.into_iter().flatten().collect();

    let rows = p
        .n_values
        .iter()
        .map(|&n| {
            let at_n: Vec<&FitRow> = fits.iter().filter(|f| f.n == n).collect();
            let lml: Vec<f64> = at_n.iter().filter_map(|f| f.lengthscale_lml).collect();
            let clml: Vec<f64> = at_n.iter().filter_map(|f| f.lengthscale_clml).collect();
            let logs = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
            let (ml, sl) = mean_se(&logs(&lml));
            let (mc, sc) = mean_se(&logs(&clml));
            let failures = at_n.iter().filter(|f| !f.error.is_empty()).count();
            let error = if lml.is_empty() {
                "every LML fit failed".to_string()
            } else if p.clml && clml.is_empty() {
                "every CLML fit failed".to_string()
            } else {
                String::new()
            };
            BiasRow {
                n,
                mean_log_lengthscale_lml: ml,
                stderr_lml: sl,
                mean_log_lengthscale_clml: p.clml.then_some(mc),
                stderr_clml: p.clml.then_some(sc),
                mean_lengthscale_lml: mean_se(&lml).0,
                mean_lengthscale_clml: p.clml.then(|| mean_se(&clml).0),
                failures,
                error,
            }
        })
        .collect();
    Ok(RbfBiasOutput { rows, fits })
}

pub struct GpRbfBias;

impl Experiment for GpRbfBias {
    type Params = RbfBiasParams;

    fn validate(p: &RbfBiasParams) -> CliResult<()> {
        at_least("datasets", p.datasets, 1)?;
        at_least("positions", p.positions, 1)?;
        at_least("clml_orderings", p.clml_orderings, 1)?;
        at_least("max_steps", p.max_steps, 1)?;
        positive("true_lengthscale", p.true_lengthscale)?;
        positive("output_scale", p.output_scale)?;
        positive("noise_std", p.noise_std)?;
        if !(p.clml_m_fraction > 0.0 && p.clml_m_fraction <= 1.0) {
            return Err(CliError::config("clml_m_fraction", "must lie in (0, 1]"));
        }
        if p.n_values.is_empty() || p.n_values.iter().any(|&n| n == 0 || n > p.positions) {
            return Err(CliError::config(
                "n_values",
                format!("each n must lie in [1, {}]", p.positions),
            ));
        }
        Ok(())
    }

    fn artifacts(p: &RbfBiasParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![
                table("gp_rbf_bias.csv", &o.rows)?,
                table("gp_rbf_bias_fits.csv", &o.fits)?,
            ],
            summary: serde_json::json!({ "rows": o.rows }),
        })
    }
}
