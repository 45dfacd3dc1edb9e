//! PAC-Bayes bounds on the expected risk of a posterior sample.
//!
//! Losses are assumed to lie in `[a, b]`. The McAllester bound is stated for
//! losses in `[0, 1]`; it is applied here to `(ℓ − a)/(b − a)` and mapped back,
//! which scales the complexity term by `b − a`.

mod empirical;

pub use empirical::{
    clipped_log_evidence, coverage_trial, empirical_pac_inputs, ClippedDensity, CoverageConfig,
    CoverageReport, CoverageTrial, EmpiricalPacInputs,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The quantity each bound is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundTerms {
    Posterior {
        kl: f64,
        empirical_risk: f64,
    },
    Evidence {
        log_evidence: f64,
    },
    ConditionalEvidence {
        log_conditional_evidence: f64,
        m: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub terms: BoundTerms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Mcallester,
    GermainLml,
    GermainClml,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_value: f64,
    pub bound_kind: BoundKind,
    pub inputs: BoundInputs,
    pub union_k: usize,
}

impl BoundInputs {
    pub fn posterior(n: usize, delta: f64, a: f64, b: f64, kl: f64, empirical_risk: f64) -> Self {
        BoundInputs {
            n,
            delta,
            a,
            b,
            terms: BoundTerms::Posterior { kl, empirical_risk },
        }
    }

    pub fn evidence(n: usize, delta: f64, a: f64, b: f64, log_evidence: f64) -> Self {
        BoundInputs {
            n,
            delta,
            a,
            b,
            terms: BoundTerms::Evidence { log_evidence },
        }
    }

    pub fn conditional(
        n: usize,
        delta: f64,
        a: f64,
        b: f64,
        log_conditional_evidence: f64,
        m: usize,
    ) -> Self {
        BoundInputs {
            n,
            delta,
            a,
            b,
            terms: BoundTerms::ConditionalEvidence {
                log_conditional_evidence,
                m,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(
                "delta",
                format!("must lie in (0, 1], got {}", self.delta),
            ));
        }
        if !(self.a.is_finite() && self.b.is_finite() && self.a < self.b) {
            return Err(Error::invalid(
                "b",
                format!("need finite a < b, got a={} b={}", self.a, self.b),
            ));
        }
        match self.terms {
            BoundTerms::Posterior { kl, empirical_risk } => {
                if !(kl.is_finite() && kl >= 0.0) {
                    return Err(Error::invalid(
                        "kl",
                        format!("must be finite and ≥ 0, got {kl}"),
                    ));
                }
                let slack = 1e-12 * (self.b - self.a);
                if !(empirical_risk >= self.a - slack && empirical_risk <= self.b + slack) {
                    return Err(Error::invalid(
                        "empirical_risk",
                        format!("must lie in [a, b], got {empirical_risk}"),
                    ));
                }
            }
            BoundTerms::Evidence { log_evidence } => {
                self.check_evidence("log_evidence", log_evidence, self.n)?
            }
            BoundTerms::ConditionalEvidence {
                log_conditional_evidence,
                m,
            } => {
                if m == 0 || m > self.n {
                    return Err(Error::invalid(
                        "m",
                        format!("must lie in 1..={}, got {m}", self.n),
                    ));
                }
                self.check_evidence(
                    "log_conditional_evidence",
                    log_conditional_evidence,
                    self.n - m + 1,
                )?;
            }
        }
        Ok(())
    }

    /// A loss in `[a, b]` forces `−count·b ≤ log evidence ≤ −count·a`.
    fn check_evidence(&self, name: &'static str, value: f64, count: usize) -> Result<()> {
        let c = count as f64;
        let slack = 1e-9 * (1.0 + c * (self.a.abs() + self.b.abs()));
        if !value.is_finite() || value > -c * self.a + slack || value < -c * self.b - slack {
            return Err(Error::invalid(
                name,
                format!(
                    "must lie in [{}, {}] for losses in [a, b], got {value}",
                    -c * self.b,
                    -c * self.a
                ),
            ));
        }
        Ok(())
    }
}

fn mcallester_value(inputs: &BoundInputs, delta: f64) -> Result<f64> {
    let BoundTerms::Posterior { kl, empirical_risk } = inputs.terms else {
        return Err(Error::invalid(
            "terms",
            "McAllester needs kl and empirical_risk",
        ));
    };
    let n = inputs.n as f64;
    let complexity = ((kl + (n / delta).ln() + 2.0) / (2.0 * n - 1.0)).sqrt();
    Ok(empirical_risk + (inputs.b - inputs.a) * complexity)
}

/// `a + (b−a)/(1−e^{a−b}) · [1 − e^a (Z δ)^{1/count}]`, evaluated through
/// `expm1` so that tight `[a, b]` and evidence near `e^{−count·a}` keep
/// their precision.
fn germain_form(a: f64, b: f64, log_z: f64, delta: f64, count: usize) -> f64 {
    let scale = (b - a) / -(a - b).exp_m1();
    let bracket = -(a + (log_z + delta.ln()) / count as f64).exp_m1();
    a + scale * bracket
}

fn germain_value(inputs: &BoundInputs, delta: f64) -> Result<(f64, BoundKind)> {
    match inputs.terms {
        BoundTerms::Evidence { log_evidence } => Ok((
            germain_form(inputs.a, inputs.b, log_evidence, delta, inputs.n),
            BoundKind::GermainLml,
        )),
        BoundTerms::ConditionalEvidence {
            log_conditional_evidence,
            m,
        } => Ok((
            germain_form(
                inputs.a,
                inputs.b,
                log_conditional_evidence,
                delta,
                inputs.n - m + 1,
            ),
            BoundKind::GermainClml,
        )),
        BoundTerms::Posterior { .. } => Err(Error::invalid(
            "terms",
            "evidence bounds need an evidence value",
        )),
    }
}

/// McAllester: `E_q R̂ + (b − a)·√((KL + log(n/δ) + 2)/(2n − 1))`.
pub fn mcallester_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    Ok(BoundReport {
        bound_value: mcallester_value(inputs, inputs.delta)?,
        bound_kind: BoundKind::Mcallester,
        inputs: *inputs,
        union_k: 1,
    })
}

/// Bound on the posterior-sample risk as a monotone function of the evidence.
pub fn germain_lml_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    if !matches!(inputs.terms, BoundTerms::Evidence { .. }) {
        return Err(Error::invalid(
            "terms",
            "germain_lml_bound needs log_evidence",
        ));
    }
    let (bound_value, bound_kind) = germain_value(inputs, inputs.delta)?;
    Ok(BoundReport {
        bound_value,
        bound_kind,
        inputs: *inputs,
        union_k: 1,
    })
}

/// The same form with the prior conditioned on the first `m − 1` points:
/// exponent `1/(n − m + 1)` and the conditional evidence in place of `Z`.
pub fn germain_clml_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    if !matches!(inputs.terms, BoundTerms::ConditionalEvidence { .. }) {
        return Err(Error::invalid(
            "terms",
            "germain_clml_bound needs log_conditional_evidence and m",
        ));
    }
    let (bound_value, bound_kind) = germain_value(inputs, inputs.delta)?;
    Ok(BoundReport {
        bound_value,
        bound_kind,
        inputs: *inputs,
        union_k: 1,
    })
}

/// Recompute `report` with `δ/k`, certifying `k` models simultaneously.
/// `inputs` keeps the unadjusted δ.
pub fn union_adjust(report: &BoundReport, k: usize) -> Result<BoundReport> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let inputs = report.inputs;
    inputs.validate()?;
    let delta = inputs.delta / k as f64;
    let bound_value = match report.bound_kind {
        BoundKind::Mcallester => mcallester_value(&inputs, delta)?,
        BoundKind::GermainLml | BoundKind::GermainClml => germain_value(&inputs, delta)?.0,
    };
    Ok(BoundReport {
        bound_value,
        bound_kind: report.bound_kind,
        inputs,
        union_k: k,
    })
}
