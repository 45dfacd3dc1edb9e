//! Learning curves and CLML cut-off sweeps for any built-in exact model.

use evidence_core::exact::{
    fourier_generate, FourierDataConfig, FourierRegressionModel, GaussianDensityModel, PriorStdRule,
};
use evidence_core::gp::{gp_generate, GPModel, KernelKind, KernelSpec, MeanFunction};
use evidence_core::selection::{clml_m_sweep, learning_curve, Candidate};
use evidence_core::{ExactEvidence, OrderedDataset, Orderings, SeedSpec};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{at_least, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Density {
        id: String,
        prior_mean: f64,
        prior_variance: f64,
    },
    Fourier {
        id: String,
        order: usize,
        prior_std: PriorStdRule,
        noise_std: f64,
    },
    Gp {
        id: String,
        kernel: KernelKind,
        lengthscale: f64,
        output_scale: f64,
        #[serde(default = "unit")]
        alpha: f64,
        noise_std: f64,
        #[serde(default)]
        mean: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn id(&self) -> &str {
        match self {
            ModelSpec::Density { id, .. }
            | ModelSpec::Fourier { id, .. }
            | ModelSpec::Gp { id, .. } => id,
        }
    }

    pub fn build(&self) -> CliResult<Box<dyn ExactEvidence>> {
        let wrap =
            |e: evidence_core::Error| CliError::config("models", format!("{}: {e}", self.id()));
        Ok(match self {
            ModelSpec::Density {
                prior_mean,
                prior_variance,
                ..
            } => Box::new(GaussianDensityModel::new(*prior_mean, *prior_variance).map_err(wrap)?),
            ModelSpec::Fourier {
                order,
                prior_std,
                noise_std,
                ..
            } => {
                Box::new(FourierRegressionModel::new(*order, prior_std, *noise_std).map_err(wrap)?)
            }
            ModelSpec::Gp {
                kernel,
                lengthscale,
                output_scale,
                alpha,
                noise_std,
                mean,
                ..
            } => {
                let k = match kernel {
                    KernelKind::Rbf => KernelSpec::rbf(*lengthscale, *output_scale),
                    KernelKind::Rq => KernelSpec::rq(*lengthscale, *output_scale, *alpha),
                };
                Box::new(GPModel::new(k, *noise_std, MeanFunction::Constant(*mean)).map_err(wrap)?)
            }
        })
    }
}

/// Synthetic dataset; the family must match the models it is scored with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// `xᵢ ~ 𝒩(true_mean, 1)`.
    Density { n: usize, true_mean: f64 },
    /// Order-`truth_order` function with `1/d²` coefficient prior.
    Fourier {
        n: usize,
        truth_order: usize,
        noise_std: f64,
        x_min: f64,
        x_max: f64,
    },
    /// RBF-GP draw at uniform inputs.
    Gp {
        n: usize,
        lengthscale: f64,
        output_scale: f64,
        noise_std: f64,
        x_min: f64,
        x_max: f64,
    },
}

impl DataSpec {
    fn family(&self) -> &'static str {
        match self {
            DataSpec::Density { .. } => "density",
            DataSpec::Fourier { .. } => "fourier",
            DataSpec::Gp { .. } => "gp",
        }
    }

    pub fn n(&self) -> usize {
        match self {
            DataSpec::Density { n, .. } | DataSpec::Fourier { n, .. } | DataSpec::Gp { n, .. } => {
                *n
            }
        }
    }

    pub fn generate(&self, seed: SeedSpec) -> CliResult<OrderedDataset> {
        Ok(match self {
            DataSpec::Density { n, true_mean } => {
                let mut rng = seed.rng();
                let xs: Vec<f64> = (0..*n)
                    .map(|_| true_mean + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                OrderedDataset::from_scalars(&xs)
            }
            DataSpec::Fourier {
                n,
                truth_order,
                noise_std,
                x_min,
                x_max,
            } => {
                fourier_generate(
                    &FourierDataConfig {
                        order: *truth_order,
                        prior_std: PriorStdRule::InverseSquare,
                        noise_std: *noise_std,
                        n: *n,
                        x_range: (*x_min, *x_max),
                        fixed_function: None,
                    },
                    seed,
                )?
                .data
            }
            DataSpec::Gp {
                n,
                lengthscale,
                output_scale,
                noise_std,
                x_min,
                x_max,
            } => {
                let truth = GPModel::new(
                    KernelSpec::rbf(*lengthscale, *output_scale),
                    *noise_std,
                    MeanFunction::Constant(0.0),
                )?;
                let mut rng = seed.child(0).rng();
                let inputs: Vec<Vec<f64>> = (0..*n)
                    .map(|_| vec![rng.random_range(*x_min..*x_max)])
                    .collect();
                gp_generate(&truth, &inputs, seed.child(1))?
            }
        })
    }
}

fn same_family(m: &ModelSpec, d: &DataSpec) -> bool {
    matches!(
        (m, d),
        (ModelSpec::Density { .. }, DataSpec::Density { .. })
            | (ModelSpec::Fourier { .. }, DataSpec::Fourier { .. })
            | (ModelSpec::Gp { .. }, DataSpec::Gp { .. })
    )
}

fn validate_models(data: &DataSpec, models: &[ModelSpec]) -> CliResult<()> {
    at_least("data.n", data.n(), 1)?;
    if models.is_empty() {
        return Err(CliError::config("models", "need at least one model"));
    }
    for m in models {
        if !same_family(m, data) {
            return Err(CliError::config(
                "models",
                format!("model `{}` does not match {} data", m.id(), data.family()),
            ));
        }
        m.build()?;
    }
    Ok(())
}

fn default_density() -> (DataSpec, Vec<ModelSpec>) {
    (
        DataSpec::Density {
            n: 20,
            true_mean: 1.0,
        },
        vec![
            ModelSpec::Density {
                id: "M1".into(),
                prior_mean: 0.0,
                prior_variance: 1.0,
            },
            ModelSpec::Density {
                id: "M2".into(),
                prior_mean: 2.0,
                prior_variance: 0.07,
            },
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningCurveParams {
    pub data: DataSpec,
    pub models: Vec<ModelSpec>,
    pub orderings: usize,
}

impl Default for LearningCurveParams {
    fn default() -> Self {
        let (data, models) = default_density();
        LearningCurveParams {
            data,
            models,
            orderings: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    pub n: usize,
    pub mean_logpred: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub lml: BTreeMap<String, f64>,
    /// Sum of the averaged curve; equals the LML for exchangeable models.
    pub curve_total: BTreeMap<String, f64>,
}

pub struct LearningCurveExperiment;

impl Experiment for LearningCurveExperiment {
    type Params = LearningCurveParams;

    fn validate(p: &LearningCurveParams) -> CliResult<()> {
        at_least("orderings", p.orderings, 1)?;
        validate_models(&p.data, &p.models)
    }

    fn artifacts(p: &LearningCurveParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let data = p.data.generate(seed.child(0))?;
        let orderings = Orderings::random(p.orderings, seed.child(1));
        let mut rows = Vec::new();
        let mut summary = CurveSummary {
            lml: BTreeMap::new(),
            curve_total: BTreeMap::new(),
        };
        for spec in &p.models {
            let model = spec.build()?;
            let lc = learning_curve(model.as_ref(), &data, orderings)?;
            for (i, (v, se)) in lc.values.iter().zip(&lc.std_errors).enumerate() {
                rows.push(CurveRow {
                    model: spec.id().into(),
                    n: i + 1,
                    mean_logpred: *v,
                    stderr: *se,
                });
            }
            summary
                .lml
                .insert(spec.id().into(), model.log_evidence(&data)?);
            summary.curve_total.insert(spec.id().into(), lc.total());
        }
        Ok(Artifacts {
            tables: vec![table("learning_curve.csv", &rows)?],
            summary: serde_json::to_value(&summary)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClmlSweepParams {
    pub data: DataSpec,
    pub models: Vec<ModelSpec>,
    /// Cut-offs `m`; empty means every `m` in `1..=n`.
    pub ms: Vec<usize>,
    pub orderings: usize,
}

impl Default for ClmlSweepParams {
    fn default() -> Self {
        let (data, models) = default_density();
        ClmlSweepParams {
            data,
            models,
            ms: Vec::new(),
            orderings: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub model: String,
    pub clml: f64,
    pub stderr: f64,
    pub preferred: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub lml: BTreeMap<String, f64>,
    /// Preferred model at each `m`.
    pub preferred: BTreeMap<usize, String>,
}

pub struct ClmlSweepExperiment;

impl Experiment for ClmlSweepExperiment {
    type Params = ClmlSweepParams;

    fn validate(p: &ClmlSweepParams) -> CliResult<()> {
        at_least("orderings", p.orderings, 1)?;
        validate_models(&p.data, &p.models)?;
        let n = p.data.n();
        if let Some(&m) = p.ms.iter().find(|&&m| m == 0 || m > n) {
            return Err(CliError::config(
                "ms",
                format!("each m must lie in [1, {n}], got {m}"),
            ));
        }
        Ok(())
    }

    fn artifacts(p: &ClmlSweepParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let data = p.data.generate(seed.child(0))?;
        let orderings = Orderings::random(p.orderings, seed.child(1));
        let models: Vec<Box<dyn ExactEvidence>> = p
            .models
            .iter()
            .map(ModelSpec::build)
            .collect::<CliResult<_>>()?;
        let candidates: Vec<Candidate> = p
            .models
            .iter()
            .zip(&models)
            .map(|(s, m)| Candidate::new(s.id(), m.as_ref()))
            .collect();
        let ms: Vec<usize> = if p.ms.is_empty() {
            (1..=data.len()).collect()
        } else {
            p.ms.clone()
        };
        let sweep = clml_m_sweep(&candidates, &data, &ms, orderings)?;

        let mut rows = Vec::new();
        let mut preferred = BTreeMap::new();
        for r in &sweep {
            for (c, est) in candidates.iter().zip(&r.clml) {
                rows.push(SweepRow {
                    m: r.m,
                    model: c.id.clone(),
                    clml: est.estimate.log_value,
                    stderr: est.ordering_std_error,
                    preferred: r.preferred.clone(),
                });
            }
            preferred.insert(r.m, r.preferred.clone());
        }
        let lml = candidates
            .iter()
            .map(|c| Ok((c.id.clone(), c.model.log_evidence(&data)?)))
            .collect::<CliResult<_>>()?;
        Ok(Artifacts {
            tables: vec![table("clml_sweep.csv", &rows)?],
            summary: serde_json::to_value(&SweepSummary { lml, preferred })?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_mismatch_is_a_config_error() {
        let p = LearningCurveParams {
            data: DataSpec::Density {
                n: 5,
                true_mean: 0.0,
            },
            models: vec![ModelSpec::Fourier {
                id: "F".into(),
                order: 2,
                prior_std: PriorStdRule::Unit,
                noise_std: 0.1,
            }],
            orderings: 3,
        };
        let e = LearningCurveExperiment::validate(&p).unwrap_err();
        assert!(matches!(e, CliError::Config { ref key, .. } if key == "models"));
    }

    #[test]
    fn model_specs_parse_from_json() {
        let m: ModelSpec = serde_json::from_str(
            r#"{"family":"gp","id":"g","kernel":"rq","lengthscale":1.0,"output_scale":1.0,"alpha":0.5,"noise_std":0.1}"#,
        )
        .unwrap();
        assert_eq!(m.id(), "g");
        assert!(m.build().is_ok());
    }
}
