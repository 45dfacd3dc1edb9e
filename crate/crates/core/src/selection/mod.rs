//! Evidence-based model comparison: learning curves, conditional marginal
//! likelihood (CLML) averaged over orderings, comparison reports and
//! data-size scans.
//!
//! Every quantity is a difference of exact evidences on prefixes:
//! `log p(𝒟_i | 𝒟_{<i}) = log p(𝒟_{≤i}) − log p(𝒟_{<i})` and
//! `log p(𝒟_{≥m} | 𝒟_{<m}) = log p(𝒟) − log p(𝒟_{<m})`.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{OrderedDataset, Orderings};
use crate::error::{Error, Result};
use crate::evidence::EvidenceEstimate;
use crate::model::ExactEvidence;

/// Mean conditional log predictive density per index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    /// Entry `i` (0-based) is the mean of `log p(𝒟_{i+1} | 𝒟_{≤i})` over orderings.
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_orderings: usize,
}

impl LearningCurve {
    /// Area under the curve; equals the LML for a single ordering.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClmlEstimate {
    /// Mean over orderings of `log p(𝒟_{≥m} | 𝒟_{<m})`.
    pub estimate: EvidenceEstimate,
    /// 1-based cut-off: the first `m − 1` points are conditioned on.
    pub m: usize,
    /// Standard error of the mean over orderings (0 for one ordering).
    pub ordering_std_error: f64,
    pub per_ordering: Vec<f64>,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn check_m(m: usize, n: usize) -> Result<()> {
    if m < 1 || m > n {
        return Err(Error::invalid(
            "m",
            format!("must lie in [1, {n}], got {m}"),
        ));
    }
    Ok(())
}

/// Learning curve averaged over orderings.
pub fn learning_curve<M: ExactEvidence + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    orderings: Orderings,
) -> Result<LearningCurve> {
    orderings.validate()?;
    let n = data.len();
    let curves: Vec<Vec<f64>> = (0..orderings.count())
        .into_par_iter()
        .map(|k| {
            let view = orderings.view(data, k)?;
            let mut prev = 0.0;
            let mut out = Vec::with_capacity(n);
            for i in 1..=n {
                let cur = model.log_evidence(&view.prefix(i))?;
                out.push(cur - prev);
                prev = cur;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(n);
    let mut std_errors = Vec::with_capacity(n);
    for i in 0..n {
        let col: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        let (m, s) = mean_and_stderr(&col);
        values.push(m);
        std_errors.push(s);
    }
    Ok(LearningCurve {
        values,
        std_errors,
        n_orderings: curves.len(),
    })
}

fn clml_from_views<M: ExactEvidence + ?Sized>(
    model: &M,
    views: &[OrderedDataset],
    m: usize,
) -> Result<Vec<f64>> {
    // An exchangeable model's full-data evidence does not depend on the ordering.
    let shared_full = if model.is_exchangeable() && !views.is_empty() {
        Some(model.log_evidence(&views[0])?)
    } else {
        None
    };
    views
        .par_iter()
        .map(|v| {
            let full = match shared_full {
                Some(f) => f,
                None => model.log_evidence(v)?,
            };
            Ok(full - model.log_evidence(&v.prefix(m - 1))?)
        })
        .collect()
}

fn finish_clml(per_ordering: Vec<f64>, m: usize) -> ClmlEstimate {
    let (mean, se) = mean_and_stderr(&per_ordering);
    ClmlEstimate {
        estimate: EvidenceEstimate::exact(mean),
        m,
        ordering_std_error: se,
        per_ordering,
    }
}

/// `log p(𝒟_{≥m} | 𝒟_{<m})` averaged over the requested orderings.
pub fn clml<M: ExactEvidence + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    m: usize,
    orderings: Orderings,
) -> Result<ClmlEstimate> {
    check_m(m, data.len())?;
    orderings.validate()?;
    let views: Vec<OrderedDataset> = (0..orderings.count())
        .map(|k| orderings.view(data, k))
        .collect::<Result<_>>()?;
    Ok(finish_clml(clml_from_views(model, &views, m)?, m))
}

/// Largest dataset accepted by [`clml_exhaustive`] (8! = 40320 orderings).
pub const EXHAUSTIVE_MAX_N: usize = 8;

/// CLML averaged over every permutation of the data.
pub fn clml_exhaustive<M: ExactEvidence + ?Sized>(
    model: &M,
    data: &OrderedDataset,
    m: usize,
) -> Result<ClmlEstimate> {
    let n = data.len();
    check_m(m, n)?;
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::invalid(
            "data",
            format!("exhaustive averaging supports at most {EXHAUSTIVE_MAX_N} points, got {n}"),
        ));
    }
    let base = data.prefix(n);
    let views: Vec<OrderedDataset> = (0..n)
        .permutations(n)
        .map(|p| base.reordered(p))
        .collect::<Result<_>>()?;
    Ok(finish_clml(clml_from_views(model, &views, m)?, m))
}

/// A named candidate model.
pub struct Candidate<'a> {
    pub id: String,
    pub model: &'a dyn ExactEvidence,
}

impl<'a> Candidate<'a> {
    pub fn new(id: impl Into<String>, model: &'a dyn ExactEvidence) -> Self {
        Candidate {
            id: id.into(),
            model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub id: String,
    pub lml: f64,
    pub clml: ClmlEstimate,
    #[serde(default)]
    pub learning_curve: Option<LearningCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scores: Vec<ModelScore>,
    pub preferred_by_lml: String,
    pub preferred_by_clml: String,
    /// Set when the preferred model tied with a later one and won by list position.
    pub lml_tie_broken: bool,
    pub clml_tie_broken: bool,
}

/// Index of the maximum, first-listed on ties, and whether a tie occurred.
fn argmax_first(values: &[f64]) -> (usize, bool) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let tie = values
        .iter()
        .enumerate()
        .any(|(i, v)| i != best && *v == values[best]);
    (best, tie)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub m: usize,
    pub orderings: Orderings,
    /// Also attach learning curves averaged over these orderings.
    pub curve_orderings: Option<Orderings>,
}

/// Score every candidate by LML and CLML on the same orderings.
pub fn compare(
    candidates: &[Candidate],
    data: &OrderedDataset,
    config: &CompareConfig,
) -> Result<ComparisonReport> {
    if candidates.len() < 2 {
        return Err(Error::invalid(
            "models",
            "need at least two models to compare",
        ));
    }
    let scores: Vec<ModelScore> = candidates
        .iter()
        .map(|c| {
            Ok(ModelScore {
                id: c.id.clone(),
                lml: c.model.log_evidence(data)?,
                clml: clml(c.model, data, config.m, config.orderings)?,
                learning_curve: match config.curve_orderings {
                    Some(o) => Some(learning_curve(c.model, data, o)?),
                    None => None,
                },
            })
        })
        .collect::<Result<_>>()?;
    let lmls: Vec<f64> = scores.iter().map(|s| s.lml).collect();
    let clmls: Vec<f64> = scores.iter().map(|s| s.clml.estimate.log_value).collect();
    let (bl, tl) = argmax_first(&lmls);
    let (bc, tc) = argmax_first(&clmls);
    Ok(ComparisonReport {
        preferred_by_lml: scores[bl].id.clone(),
        preferred_by_clml: scores[bc].id.clone(),
        lml_tie_broken: tl,
        clml_tie_broken: tc,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub n: usize,
    pub lml: Vec<f64>,
    pub preferred: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverScan {
    pub ids: Vec<String>,
    pub rows: Vec<CrossoverRow>,
    /// Smallest scheduled size whose LML preference differs from the first row's.
    pub first_flip: Option<usize>,
    /// Smallest scheduled size from which the flipped preference persists to the end.
    pub stable_flip: Option<usize>,
}

/// LML preference on the prefixes `𝒟_{≤n}` for each `n` in `schedule`.
pub fn crossover_scan(
    candidates: &[Candidate],
    data: &OrderedDataset,
    schedule: &[usize],
) -> Result<CrossoverScan> {
    if candidates.len() < 2 {
        return Err(Error::invalid(
            "models",
            "need at least two models to compare",
        ));
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "schedule",
            "must be nonempty and strictly increasing",
        ));
    }
    if let Some(&n) = schedule.iter().find(|&&n| n == 0 || n > data.len()) {
        return Err(Error::invalid(
            "schedule",
            format!("size {n} outside [1, {}]", data.len()),
        ));
    }
    let rows: Vec<CrossoverRow> = schedule
        .par_iter()
        .map(|&n| {
            let prefix = data.prefix(n);
            let lml: Vec<f64> = candidates
                .iter()
                .map(|c| c.model.log_evidence(&prefix))
                .collect::<Result<_>>()?;
            let (best, _) = argmax_first(&lml);
            Ok(CrossoverRow {
                n,
                lml,
                preferred: candidates[best].id.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let base = &rows[0].preferred;
    let first_flip = rows.iter().find(|r| &r.preferred != base).map(|r| r.n);
    let stable_flip = match rows.iter().rposition(|r| &r.preferred == base) {
        Some(last) if last + 1 < rows.len() => Some(rows[last + 1].n),
        _ => None,
    };
    Ok(CrossoverScan {
        ids: candidates.iter().map(|c| c.id.clone()).collect(),
        rows,
        first_flip,
        stable_flip,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub clml: Vec<ClmlEstimate>,
    pub preferred: String,
}

/// CLML of every candidate for each cut-off in `ms`, on shared orderings.
pub fn clml_m_sweep(
    candidates: &[Candidate],
    data: &OrderedDataset,
    ms: &[usize],
    orderings: Orderings,
) -> Result<Vec<SweepRow>> {
    if candidates.is_empty() {
        return Err(Error::invalid("models", "need at least one model"));
    }
    for &m in ms {
        check_m(m, data.len())?;
    }
    ms.iter()
        .map(|&m| {
            let clml: Vec<ClmlEstimate> = candidates
                .iter()
                .map(|c| clml(c.model, data, m, orderings))
                .collect::<Result<_>>()?;
            let vals: Vec<f64> = clml.iter().map(|c| c.estimate.log_value).collect();
            let (best, _) = argmax_first(&vals);
            Ok(SweepRow {
                m,
                clml,
                preferred: candidates[best].id.clone(),
            })
        })
        .collect()
}
