//! LML/CLML comparison of Fourier models of different order, learning
//! curves, data fits and the LML crossover scan.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use evidence_core::exact::{
    fourier_generate, FourierDataConfig, FourierRegressionModel, PriorStdRule,
};
use evidence_core::selection::{compare, crossover_scan, Candidate, CompareConfig};
use evidence_core::{ExactEvidence, Orderings, SeedSpec};
use serde::{Deserialize, Serialize};

use super::{at_least, linspace, positive, range, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourierParams {
    /// Size of the comparison dataset (a prefix of the pool).
    pub n: usize,
    /// Points drawn in total; the crossover scan runs up to this size.
    pub pool_n: usize,
    pub truth_order: usize,
    pub noise_std: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// `M<D>` has unit priors; `M<D>c` has the 1/d² prior of the generator.
    pub models: Vec<String>,
    pub m: usize,
    pub orderings: usize,
    pub curve_orderings: usize,
    pub scan_from: usize,
    pub scan_step: usize,
    pub grid_points: usize,
}

impl Default for FourierParams {
    fn default() -> Self {
        FourierParams {
            n: 100,
            pool_n: 600,
            truth_order: 9,
            noise_std: 0.1,
            x_min: 0.0,
            x_max: 2.0 * PI,
            models: vec!["M3".into(), "M9".into()],
            m: 85,
            orderings: 200,
            curve_orderings: 100,
            scan_from: 10,
            scan_step: 1,
            grid_points: 200,
        }
    }
}

/// Parse `M<D>` / `M<D>c`.
pub fn parse_model(id: &str, noise_std: f64) -> CliResult<FourierRegressionModel> {
    let bad = || {
        CliError::config(
            "models",
            format!("expected M<order> or M<order>c, got `{id}`"),
        )
    };
    let body = id.strip_prefix('M').ok_or_else(bad)?;
    let (digits, rule) = match body.strip_suffix('c') {
        Some(d) => (d, PriorStdRule::InverseSquare),
        None => (body, PriorStdRule::Unit),
    };
    let order: usize = digits.parse().map_err(|_| bad())?;
    FourierRegressionModel::new(order, &rule, noise_std)
        .map_err(|e| CliError::config("models", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub order: usize,
    pub lml: f64,
    pub clml: f64,
    pub clml_stderr: f64,
    /// Mean squared error of the predictive mean against the true function on a grid.
    pub test_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    pub n: usize,
    pub mean_logpred: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub n: usize,
    pub model: String,
    pub lml: f64,
    pub preferred: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub model: String,
    pub x: f64,
    pub truth: f64,
    pub pred_mean: f64,
    pub pred_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSummary {
    pub preferred_by_lml: String,
    pub preferred_by_clml: String,
    pub lml: BTreeMap<String, f64>,
    pub clml: BTreeMap<String, f64>,
    pub test_mse: BTreeMap<String, f64>,
    /// Smallest scanned size whose LML preference differs from the first.
    pub first_flip: Option<usize>,
    /// Smallest scanned size from which the flipped preference persists.
    pub stable_flip: Option<usize>,
}

pub struct FourierOutput {
    pub models: Vec<ModelRow>,
    pub curves: Vec<CurveRow>,
    pub crossover: Vec<CrossoverRow>,
    pub fits: Vec<FitRow>,
    pub summary: FourierSummary,
}

pub fn compute(p: &FourierParams, seed: SeedSpec) -> CliResult<FourierOutput> {
    let sample = fourier_generate(
        &FourierDataConfig {
            order: p.truth_order,
            prior_std: PriorStdRule::InverseSquare,
            noise_std: p.noise_std,
            n: p.pool_n,
            x_range: (p.x_min, p.x_max),
            fixed_function: None,
        },
        seed.child(0),
    )?;
    let data = sample.data.prefix(p.n);
    let models: Vec<FourierRegressionModel> = p
        .models
        .iter()
        .map(|id| parse_model(id, p.noise_std))
        .collect::<CliResult<_>>()?;
    let candidates: Vec<Candidate> = p
        .models
        .iter()
        .zip(&models)
        .map(|(id, m)| Candidate::new(id.clone(), m as &dyn ExactEvidence))
        .collect();

    let report = compare(
        &candidates,
        &data,
        &CompareConfig {
            m: p.m,
            orderings: Orderings::random(p.orderings, seed.child(1)),
            curve_orderings: Some(Orderings::random(p.curve_orderings, seed.child(2))),
        },
    )?;

    let grid = linspace(p.x_min, p.x_max, p.grid_points);
    let truth: Vec<f64> = grid.iter().map(|&x| sample.truth.eval(x)).collect();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut fits = Vec::new();
    for (score, model) in report.scores.iter().zip(&models) {
        let (mean, cov) = model.predictive_moments(&data, &grid)?;
        let mse = mean
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        rows.push(ModelRow {
            model: score.id.clone(),
            order: model.order(),
            lml: score.lml,
            clml: score.clml.estimate.log_value,
            clml_stderr: score.clml.ordering_std_error,
            test_mse: mse,
        });
        if let Some(lc) = &score.learning_curve {
            for (i, (v, se)) in lc.values.iter().zip(&lc.std_errors).enumerate() {
                curves.push(CurveRow {
                    model: score.id.clone(),
                    n: i + 1,
                    mean_logpred: *v,
                    stderr: *se,
                });
            }
        }
        for (i, &x) in grid.iter().enumerate() {
            fits.push(FitRow {
                model: score.id.clone(),
                x,
                truth: truth[i],
                pred_mean: mean[i],
                pred_sd: cov[(i, i)].max(0.0).sqrt(),
            });
        }
    }

    let schedule: Vec<usize> = (p.scan_from..=p.pool_n).step_by(p.scan_step).collect();
    let scan = crossover_scan(&candidates, &sample.data, &schedule)?;
    let mut crossover = Vec::new();
    for r in &scan.rows {
        for (id, v) in scan.ids.iter().zip(&r.lml) {
            crossover.push(CrossoverRow {
                n: r.n,
                model: id.clone(),
                lml: *v,
                preferred: r.preferred.clone(),
            });
        }
    }

    let summary = FourierSummary {
        preferred_by_lml: report.preferred_by_lml.clone(),
        preferred_by_clml: report.preferred_by_clml.clone(),
        lml: rows.iter().map(|r| (r.model.clone(), r.lml)).collect(),
        clml: rows.iter().map(|r| (r.model.clone(), r.clml)).collect(),
        test_mse: rows.iter().map(|r| (r.model.clone(), r.test_mse)).collect(),
        first_flip: scan.first_flip,
        stable_flip: scan.stable_flip,
    };
    Ok(FourierOutput {
        models: rows,
        curves,
        crossover,
        fits,
        summary,
    })
}

pub struct Fourier;

impl Experiment for Fourier {
    type Params = FourierParams;

    fn validate(p: &FourierParams) -> CliResult<()> {
        at_least("n", p.n, 1)?;
        at_least("pool_n", p.pool_n, p.n)?;
        at_least("truth_order", p.truth_order, 1)?;
        positive("noise_std", p.noise_std)?;
        range("x_max", p.x_min, p.x_max)?;
        if p.models.len() < 2 {
            return Err(CliError::config("models", "need at least two models"));
        }
        for id in &p.models {
            parse_model(id, p.noise_std)?;
        }
        if p.m < 1 || p.m > p.n {
            return Err(CliError::config(
                "m",
                format!("must lie in [1, {}], got {}", p.n, p.m),
            ));
        }
        at_least("orderings", p.orderings, 1)?;
        at_least("curve_orderings", p.curve_orderings, 1)?;
        at_least("scan_from", p.scan_from, 1)?;
        at_least("scan_step", p.scan_step, 1)?;
        at_least("grid_points", p.grid_points, 2)?;
        if p.scan_from > p.pool_n {
            return Err(CliError::config("scan_from", "must not exceed pool_n"));
        }
        Ok(())
    }

    fn artifacts(p: &FourierParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![
                table("fourier_models.csv", &o.models)?,
                table("fourier_learning_curves.csv", &o.curves)?,
                table("fourier_crossover.csv", &o.crossover)?,
                table("fourier_fit.csv", &o.fits)?,
            ],
            summary: serde_json::to_value(&o.summary)?,
        })
    }
}
