//! Quadrature vs Laplace evidence for `x ~ 𝒩(sin w, 1)`, `w ~ U[−α, α]`.

use std::f64::consts::{LN_2, PI};

use evidence_core::approx::{laplace_evidence, HessianMode};
use evidence_core::exact::PeriodicSineModel;
use evidence_core::sampling::quadrature_evidence;
use evidence_core::{OrderedDataset, SeedSpec};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{at_least, linspace, positive, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplacePeriodicParams {
    pub n: usize,
    pub true_w: f64,
    /// Prior half-widths α.
    pub alphas: Vec<f64>,
    /// Starting Simpson panel count; doubled until converged.
    pub resolution: usize,
    /// Points of the unnormalized log posterior written per α.
    pub posterior_points: usize,
}

impl Default for LaplacePeriodicParams {
    fn default() -> Self {
        LaplacePeriodicParams {
            n: 5,
            true_w: 1.0,
            alphas: vec![2.0 * PI, 4.0 * PI, 8.0 * PI, 16.0 * PI],
            resolution: 256,
            posterior_points: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub alpha: f64,
    pub exact_lml_quadrature: f64,
    pub laplace_lml: f64,
    pub w_map: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub alpha: f64,
    pub w: f64,
    pub log_joint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSummary {
    /// `max − min` of the quadrature LML over α.
    pub quadrature_range: f64,
    /// Largest `|Laplace(2α) − Laplace(α) + log 2|` over consecutive doublings.
    pub max_doubling_deviation: Option<f64>,
    pub laplace_range: f64,
}

pub struct LaplaceOutput {
    pub rows: Vec<LaplaceRow>,
    pub posterior: Vec<PosteriorRow>,
    pub summary: LaplaceSummary,
}

pub fn dataset(p: &LaplacePeriodicParams, seed: SeedSpec) -> OrderedDataset {
    let mut rng = seed.child(0).rng();
    let xs: Vec<f64> = (0..p.n)
        .map(|_| p.true_w.sin() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    OrderedDataset::from_scalars(&xs)
}

fn spread(xs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    hi - lo
}

pub fn compute(p: &LaplacePeriodicParams, seed: SeedSpec) -> CliResult<LaplaceOutput> {
    let data = dataset(p, seed);
    let xs = data.scalars()?;
    let init = (xs.iter().sum::<f64>() / xs.len() as f64)
        .clamp(-0.99, 0.99)
        .asin();

    let mut rows = Vec::new();
    let mut posterior = Vec::new();
    for &alpha in &p.alphas {
        let model = PeriodicSineModel::new(alpha)?;
        let quad = quadrature_evidence(&model, &data, p.resolution);
        let lap = laplace_evidence(&model, &data, &[init], HessianMode::Full);
        let mut error = super::error_text(&quad);
        if let Err(e) = &lap {
            if !error.is_empty() {
                error.push_str("; ");
            }
            error.push_str(&e.to_string());
        }
        rows.push(LaplaceRow {
            alpha,
            exact_lml_quadrature: quad.map_or(f64::NAN, |q| q.log_value),
            laplace_lml: lap.as_ref().map_or(f64::NAN, |r| r.log_evidence),
            w_map: lap.as_ref().map_or(f64::NAN, |r| r.w_map[0]),
            error,
        });
        for w in linspace(-alpha, alpha, p.posterior_points) {
            posterior.push(PosteriorRow {
                alpha,
                w,
                log_joint: model.log_joint_at(&data, w)?,
            });
        }
    }

    let ok: Vec<&LaplaceRow> = rows.iter().filter(|r| r.error.is_empty()).collect();
    if ok.is_empty() {
        return Err(CliError::Numerical(format!(
            "every α failed: {}",
            rows[0].error
        )));
    }
    let doublings: Vec<f64> = ok
        .windows(2)
        .filter(|w| (w[1].alpha / w[0].alpha - 2.0).abs() < 1e-12)
        .map(|w| (w[1].laplace_lml - w[0].laplace_lml + LN_2).abs())
        .collect();
    let summary = LaplaceSummary {
        quadrature_range: spread(ok.iter().map(|r| r.exact_lml_quadrature)),
        max_doubling_deviation: doublings.iter().copied().reduce(f64::max),
        laplace_range: spread(ok.iter().map(|r| r.laplace_lml)),
    };
    Ok(LaplaceOutput {
        rows,
        posterior,
        summary,
    })
}

pub struct LaplacePeriodic;

impl Experiment for LaplacePeriodic {
    type Params = LaplacePeriodicParams;

    fn validate(p: &LaplacePeriodicParams) -> CliResult<()> {
        at_least("n", p.n, 1)?;
        at_least("resolution", p.resolution, 2)?;
        at_least("posterior_points", p.posterior_points, 2)?;
        if !p.true_w.is_finite() {
            return Err(CliError::config("true_w", "must be finite"));
        }
        if p.alphas.is_empty() {
            return Err(CliError::config("alphas", "need at least one value"));
        }
        for a in &p.alphas {
            positive("alphas", *a)?;
        }
        Ok(())
    }

    fn artifacts(p: &LaplacePeriodicParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![
                table("laplace_periodic.csv", &o.rows)?,
                table("laplace_periodic_posterior.csv", &o.posterior)?,
            ],
            summary: serde_json::to_value(&o.summary)?,
        })
    }
}
