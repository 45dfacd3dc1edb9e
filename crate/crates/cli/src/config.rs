//! Experiment selection and `key=value` override resolution.

use std::path::PathBuf;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum ExperimentId {
    Density,
    Fourier,
    GpRbfBias,
    GpRq,
    GpMlpMean,
    LaplacePeriodic,
    SamplingCheck,
    PacBayes,
    LearningCurve,
    ClmlSweep,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Density => "density",
            ExperimentId::Fourier => "fourier",
            ExperimentId::GpRbfBias => "gp-rbf-bias",
            ExperimentId::GpRq => "gp-rq",
            ExperimentId::GpMlpMean => "gp-mlp-mean",
            ExperimentId::LaplacePeriodic => "laplace-periodic",
            ExperimentId::SamplingCheck => "sampling-check",
            ExperimentId::PacBayes => "pac-bayes",
            ExperimentId::LearningCurve => "learning-curve",
            ExperimentId::ClmlSweep => "clml-sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub out: PathBuf,
    /// `(dotted.key, raw value)` in command-line order.
    pub overrides: Vec<(String, String)>,
}

/// Split `key=value`.
pub fn parse_override(s: &str) -> CliResult<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(CliError::config(s, "expected key=value")),
    }
}

/// A raw override is read as JSON when it parses, otherwise as a string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn slot<'a>(root: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    let mut cur = root;
    for part in key.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part)?,
            Value::Array(items) => items.get_mut(part.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

/// Apply overrides to the defaults of `P`. Unknown keys and values that do
/// not fit the parameter type are reported against the offending key.
pub fn resolve<P>(overrides: &[(String, String)]) -> CliResult<P>
where
    P: Serialize + DeserializeOwned + Default,
{
    let mut value = serde_json::to_value(P::default())?;
    for (key, raw) in overrides {
        let target = slot(&mut value, key).ok_or_else(|| CliError::config(key, "unknown key"))?;
        *target = parse_value(raw);
        serde_json::from_value::<P>(value.clone())
            .map_err(|e| CliError::config(key, e.to_string()))?;
    }
    serde_json::from_value(value).map_err(|e| CliError::config("<config>", e.to_string()))
}
