//! One module per experiment. `compute` returns typed rows and a summary;
//! `artifacts` encodes them.

pub mod density;
pub mod fourier;
pub mod generic;
pub mod gp_mlp_mean;
pub mod gp_rbf_bias;
pub mod gp_rq;
pub mod laplace_periodic;
pub mod pac_bayes;
pub mod sampling_check;

use evidence_core::SeedSpec;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::Artifacts;

pub trait Experiment {
    type Params: Serialize + DeserializeOwned + Default;

    fn validate(_params: &Self::Params) -> CliResult<()> {
        Ok(())
    }

    fn artifacts(params: &Self::Params, seed: SeedSpec) -> CliResult<Artifacts>;
}

/// `k` points from `lo` to `hi`; endpoints are exact.
pub(crate) fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let d = (k - 1) as f64;
    (0..k)
        .map(|i| (lo * (d - i as f64) + hi * i as f64) / d)
        .collect()
}

/// `k` log-spaced points from `lo` to `hi`.
pub(crate) fn logspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    linspace(lo.log10(), hi.log10(), k)
        .into_iter()
        .map(|e| 10f64.powf(e))
        .collect()
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// First index of the maximum; NaNs are skipped.
pub(crate) fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if x.is_nan() {
            continue;
        }
        if best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

pub(crate) fn positive(key: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(
            key,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

pub(crate) fn at_least(key: &str, v: usize, min: usize) -> CliResult<()> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::config(
            key,
            format!("must be at least {min}, got {v}"),
        ))
    }
}

pub(crate) fn range(key: &str, lo: f64, hi: f64) -> CliResult<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(CliError::config(
            key,
            format!("need finite lower < upper, got {lo} and {hi}"),
        ))
    }
}

pub(crate) fn error_text<T>(r: &evidence_core::Result<T>) -> String {
    match r {
        Ok(_) => String::new(),
        Err(e) => e.to_string(),
    }
}
