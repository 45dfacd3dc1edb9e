//! PAC-Bayes bounds over configured inputs, arithmetic checks and the
//! frequentist coverage trial on the clipped Gaussian-mean model.

use evidence_core::pac_bayes::{
    coverage_trial, germain_clml_bound, germain_lml_bound, mcallester_bound, union_adjust,
    BoundInputs, BoundKind, BoundReport, CoverageConfig, CoverageTrial,
};
use evidence_core::SeedSpec;
use serde::{Deserialize, Serialize};

use super::{at_least, linspace, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{table, Artifacts};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// One bound to evaluate. Fields not used by `kind` must be left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub label: String,
    pub kind: BoundKind,
    pub n: usize,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub kl: Option<f64>,
    #[serde(default)]
    pub empirical_risk: Option<f64>,
    #[serde(default)]
    pub log_evidence: Option<f64>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "one")]
    pub union_k: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageParams {
    pub trials: usize,
    pub n: usize,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub true_mean: f64,
    pub n_samples: usize,
}

impl Default for CoverageParams {
    fn default() -> Self {
        let c = CoverageConfig::default();
        CoverageParams {
            trials: c.trials,
            n: c.n,
            delta: c.delta,
            a: c.a,
            b: c.b,
            prior_mean: c.prior_mean,
            prior_variance: c.prior_variance,
            true_mean: c.true_mean,
            n_samples: c.n_samples,
        }
    }
}

/// Inputs of the arithmetic checks reported in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckParams {
    pub n: usize,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub grid_points: usize,
    pub union_k: usize,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            n: 50,
            delta: 0.05,
            a: 0.5,
            b: 5.0,
            grid_points: 50,
            union_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacBayesParams {
    pub bounds: Vec<BoundSpec>,
    pub checks: CheckParams,
    pub coverage: CoverageParams,
}

fn spec(label: &str, kind: BoundKind, n: usize, a: f64, b: f64) -> BoundSpec {
    BoundSpec {
        label: label.into(),
        kind,
        n,
        delta: 0.05,
        a,
        b,
        kl: None,
        empirical_risk: None,
        log_evidence: None,
        m: None,
        union_k: 1,
    }
}

impl Default for PacBayesParams {
    fn default() -> Self {
        let mc = BoundSpec {
            kl: Some(2.0),
            empirical_risk: Some(0.3),
            ..spec("mcallester", BoundKind::Mcallester, 50, 0.0, 1.0)
        };
        let lml = BoundSpec {
            log_evidence: Some(-60.0),
            ..spec("germain_lml", BoundKind::GermainLml, 50, HALF_LN_2PI, 5.0)
        };
        let clml = BoundSpec {
            log_evidence: Some(-30.0),
            m: Some(26),
            ..spec("germain_clml", BoundKind::GermainClml, 50, HALF_LN_2PI, 5.0)
        };
        PacBayesParams {
            bounds: vec![
                mc.clone(),
                BoundSpec {
                    label: "mcallester_union".into(),
                    union_k: 10,
                    ..mc
                },
                lml.clone(),
                BoundSpec {
                    label: "germain_lml_union".into(),
                    union_k: 10,
                    ..lml
                },
                clml,
            ],
            checks: CheckParams::default(),
            coverage: CoverageParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub label: String,
    pub kind: BoundKind,
    pub n: usize,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub kl: Option<f64>,
    pub empirical_risk: Option<f64>,
    pub log_evidence: Option<f64>,
    pub m: Option<usize>,
    pub union_k: usize,
    pub bound_value: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacBayesSummary {
    pub coverage_trials: usize,
    pub mcallester_violations: usize,
    pub germain_violations: usize,
    /// Evidence bound at `log Z = −n·a`, `δ = 1`; equals `a`.
    pub vanishing_bracket_value: f64,
    pub vanishing_bracket_a: f64,
    /// `|union_adjust(r, k) − bound(δ/k)|` for McAllester.
    pub union_identity_error: f64,
    /// Evidence bound strictly decreasing over the evidence grid.
    pub evidence_grid_monotone: bool,
    pub evidence_grid_points: usize,
}

pub struct PacBayesOutput {
    pub bounds: Vec<BoundRow>,
    pub coverage: Vec<CoverageTrial>,
    pub summary: PacBayesSummary,
}

fn inputs(s: &BoundSpec) -> CliResult<BoundInputs> {
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| CliError::config(key, format!("required by bound `{}`", s.label)))
    };
    Ok(match s.kind {
        BoundKind::Mcallester => BoundInputs::posterior(
            s.n,
            s.delta,
            s.a,
            s.b,
            need(s.kl, "kl")?,
            need(s.empirical_risk, "empirical_risk")?,
        ),
        BoundKind::GermainLml => BoundInputs::evidence(
            s.n,
            s.delta,
            s.a,
            s.b,
            need(s.log_evidence, "log_evidence")?,
        ),
        BoundKind::GermainClml => BoundInputs::conditional(
            s.n,
            s.delta,
            s.a,
            s.b,
            need(s.log_evidence, "log_evidence")?,
            s.m.ok_or_else(|| CliError::config("m", format!("required by bound `{}`", s.label)))?,
        ),
    })
}

fn evaluate(s: &BoundSpec) -> CliResult<BoundReport> {
    let i = inputs(s)?;
    let r = match s.kind {
        BoundKind::Mcallester => mcallester_bound(&i),
        BoundKind::GermainLml => germain_lml_bound(&i),
        BoundKind::GermainClml => germain_clml_bound(&i),
    }?;
    Ok(if s.union_k > 1 {
        union_adjust(&r, s.union_k)?
    } else {
        r
    })
}

fn checks(c: &CheckParams) -> CliResult<(f64, f64, bool)> {
    let nf = c.n as f64;
    let vanishing =
        germain_lml_bound(&BoundInputs::evidence(c.n, 1.0, c.a, c.b, -c.a * nf))?.bound_value;

    let base = mcallester_bound(&BoundInputs::posterior(
        c.n,
        c.delta,
        c.a,
        c.b,
        1.0,
        0.5 * (c.a + c.b),
    ))?;
    let adjusted = union_adjust(&base, c.union_k)?.bound_value;
    let direct = mcallester_bound(&BoundInputs {
        delta: c.delta / c.union_k as f64,
        ..base.inputs
    })?
    .bound_value;

    let values = linspace(-nf * c.b, -nf * c.a, c.grid_points)
        .into_iter()
        .map(|e| {
            Ok(germain_lml_bound(&BoundInputs::evidence(c.n, c.delta, c.a, c.b, e))?.bound_value)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    Ok((vanishing, (adjusted - direct).abs(), monotone))
}

pub fn compute(p: &PacBayesParams, seed: SeedSpec) -> CliResult<PacBayesOutput> {
    let bounds = p
        .bounds
        .iter()
        .map(|s| {
            let (bound_value, error) = match evaluate(s) {
                Ok(r) => (r.bound_value, String::new()),
                Err(e) => (f64::NAN, e.to_string()),
            };
            BoundRow {
                label: s.label.clone(),
                kind: s.kind,
                n: s.n,
                delta: s.delta,
                a: s.a,
                b: s.b,
                kl: s.kl,
                empirical_risk: s.empirical_risk,
                log_evidence: s.log_evidence,
                m: s.m,
                union_k: s.union_k,
                bound_value,
                error,
            }
        })
        .collect();

    let (vanishing, union_err, monotone) = checks(&p.checks)?;
    let c = &p.coverage;
    let report = coverage_trial(&CoverageConfig {
        trials: c.trials,
        n: c.n,
        delta: c.delta,
        a: c.a,
        b: c.b,
        prior_mean: c.prior_mean,
        prior_variance: c.prior_variance,
        true_mean: c.true_mean,
        n_samples: c.n_samples,
        seed: seed.child(0),
    })?;
    Ok(PacBayesOutput {
        bounds,
        summary: PacBayesSummary {
            coverage_trials: c.trials,
            mcallester_violations: report.mcallester_violations,
            germain_violations: report.germain_violations,
            vanishing_bracket_value: vanishing,
            vanishing_bracket_a: p.checks.a,
            union_identity_error: union_err,
            evidence_grid_monotone: monotone,
            evidence_grid_points: p.checks.grid_points,
        },
        coverage: report.trials,
    })
}

pub struct PacBayes;

impl Experiment for PacBayes {
    type Params = PacBayesParams;

    fn validate(p: &PacBayesParams) -> CliResult<()> {
        for s in &p.bounds {
            at_least("union_k", s.union_k, 1)?;
            inputs(s)?;
        }
        at_least("checks.n", p.checks.n, 1)?;
        at_least("checks.grid_points", p.checks.grid_points, 2)?;
        at_least("checks.union_k", p.checks.union_k, 1)?;
        at_least("coverage.trials", p.coverage.trials, 1)?;
        at_least("coverage.n", p.coverage.n, 1)?;
        at_least("coverage.n_samples", p.coverage.n_samples, 1)?;
        Ok(())
    }

    fn artifacts(p: &PacBayesParams, seed: SeedSpec) -> CliResult<Artifacts> {
        let o = compute(p, seed)?;
        Ok(Artifacts {
            tables: vec![
                table("pac_bayes_bounds.csv", &o.bounds)?,
                table("pac_bayes_coverage.csv", &o.coverage)?,
            ],
            summary: serde_json::to_value(&o.summary)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rows_evaluate_and_union_loosens() {
        let p = PacBayesParams::default();
        PacBayes::validate(&p).unwrap();
        let v: Vec<f64> = p
            .bounds
            .iter()
            .map(|s| evaluate(s).unwrap().bound_value)
            .collect();
        assert!(v[1] > v[0] && v[3] > v[2]);
        for (s, b) in p.bounds.iter().zip(&v) {
            assert!(*b >= s.a, "{}", s.label);
        }
    }

    #[test]
    fn checks_hold_at_defaults() {
        let (vanishing, union_err, monotone) = checks(&CheckParams::default()).unwrap();
        assert_eq!(vanishing, 0.5);
        assert!(union_err <= 1e-12);
        assert!(monotone);
    }
}
