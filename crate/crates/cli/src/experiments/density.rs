//! Evidence, test likelihood and predictive moments of the Gaussian-mean
//! model across prior variances, plus learning curves.

use evidence_core::exact::GaussianDensityModel;
use evidence_core::selection::learning_curve;
use evidence_core::{OrderedDataset, Orderings, SeedSpec};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{argmax, at_least, logspace, positive, range, Experiment};
use crate::error::CliResult;
use crate::output::{table, Artifacts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityParams {
    pub n: usize,
    pub true_mean: f64,
    pub prior_mean: f64,
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    pub grid_points: usize,
    pub test_n: usize,
    /// σ² range over which LML monotonicity and predictive stability are summarized.
    pub stable_from: f64,
    pub stable_to: f64,
    pub curve_sigma2: Vec<f64>,
    pub curve_orderings: usize,
}

impl Default for DensityParams {
    fn default() -> Self {
        DensityParams {
            n: 20,
            true_mean: 1.0,
            prior_mean: 0.0,
            sigma2_min: 1e-2,
            sigma2_max: 1e3,
            grid_points: 51,
            test_n: 1000,
            stable_from: 10.0,
            stable_to: 1000.0,
            curve_sigma2: vec![0.1, 1.0, 10.0, 1000.0],
            curve_orderings: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub sigma2: f64,
    pub lml: f64,
    /// Mean per-point log predictive density of the test set.
    pub test_ll: f64,
    pub pred_mean: f64,
    pub pred_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub sigma2: f64,
    pub n: usize,
    pub mean_logpred: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub lml_strictly_decreasing_in_stable_range: bool,
    /// `(max − min)/|min|` over grid points in the stable range.
    pub pred_mean_rel_change: f64,
    pub pred_var_rel_change: f64,
    pub argmax_sigma2_lml: f64,
    pub argmax_sigma2_test_ll: f64,
    pub sample_mean: f64,
}

pub struct DensityOutput {
    pub rows: Vec<DensityRow>,
    pub curves: Vec<CurveRow>,
    pub summary: DensitySummary,
}

/// Training and test draws from `𝒩(true_mean, 1)`.
pub fn dataset(p: &DensityParams, seed: SeedSpec) -> (OrderedDataset, Vec<f64>) {
    let mut rng = seed.child(0).rng();
    let mut draw = |k: usize| -> Vec<f64> {
        (0..k)
            .map(|_| p.true_mean + rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let train = draw(p.n);
    let test = draw(p.test_n);
    (OrderedDataset::from_scalars(&train), test)
}

fn rel_change(xs: &[f64]) -> f64 {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo.abs()
}

pub fn compute(p: &DensityParams, seed: SeedSpec) -> CliResult<DensityOutput> {
    let (train, test) = dataset(p, seed);
    let rows = logspace(p.sigma2_min, p.sigma2_max, p.grid_points)
        .into_iter()
        .map(|s2| {
            let model = GaussianDensityModel::new(p.prior_mean, s2)?;
            let pred = model.predictive(&train)?;
            let test_ll = test
                .iter()
                .map(|x| pred.log_pdf(&[*x]))
                .sum::<evidence_core::Result<f64>>()?
                / test.len() as f64;
            Ok(DensityRow {
                sigma2: s2,
                lml: model.lml(&train)?.log_value,
                test_ll,
                pred_mean: pred.mean()[0],
                pred_var: pred.variances()[0],
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut curves = Vec::new();
    for (k, &s2) in p.curve_sigma2.iter().enumerate() {
        let model = GaussianDensityModel::new(p.prior_mean, s2)?;
        let lc = learning_curve(
            &model,
            &train,
            Orderings::random(p.curve_orderings, seed.child(1 + k as u64)),
        )?;
        for (i, (v, se)) in lc.values.iter().zip(&lc.std_errors).enumerate() {
            curves.push(CurveRow {
                sigma2: s2,
                n: i + 1,
                mean_logpred: *v,
                stderr: *se,
            });
        }
    }

    let stable: Vec<&DensityRow> = rows
        .iter()
        .filter(|r| r.sigma2 >= p.stable_from && r.sigma2 <= p.stable_to)
        .collect();
    let lmls: Vec<f64> = rows.iter().map(|r| r.lml).collect();
    let tlls: Vec<f64> = rows.iter().map(|r| r.test_ll).collect();
    let summary = DensitySummary {
        lml_strictly_decreasing_in_stable_range: stable.len() >= 2
            && stable.windows(2).all(|w| w[1].lml < w[0].lml),
        pred_mean_rel_change: rel_change(&stable.iter().map(|r| r.pred_mean).collect::<Vec<_>>()),
        pred_var_rel_change: rel_change(&stable.iter().map(|r| r.pred_var).collect::<Vec<_>>()),
        argmax_sigma2_lml: argmax(&lmls).map_or(f64::NAN, |i| rows[i].sigma2),
        argmax_sigma2_test_ll: argmax(&tlls).map_or(f64::NAN, |i| rows[i].sigma2),
        sample_mean: train.scalars()?.iter().sum::<f64>() / p.n as f64,
    };
    Ok(DensityOutput {
        rows,
        curves,
        summary,
    })
}

pub struct Density;

impl Experiment for Density {
    type Params = DensityParams;

    fn validate(p: &DensityParams) -> CliResult<()> {
        at_least("n", p.n, 1)?;
        at_least("test_n", p.test_n, 1)?;
        at_least("grid_points", p.grid_points, 2)?;
        at_least("curve_orderings", p.curve_orderings, 1)?;
        positive("sigma2_min", p.sigma2_min)?;
        range("sigma2_max", p.sigma2_min, p.sigma2_max)?;
        range("stable_to", p.stable_from, p.stable_to)?;
        for s in &p.curve_sigma2 {
            positive("curve_sigma2", *s)?;
        }
        Ok(())
    }

    fn artifacts(p: &DensityParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![
                table("density.csv", &o.rows)?,
                table("learning_curve.csv", &o.curves)?,
            ],
            summary: serde_json::to_value(&o.summary)?,
        })
    }
}
