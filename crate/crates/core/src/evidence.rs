use serde::{Deserialize, Serialize};

/// How a log-evidence value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Quadrature,
    Laplace,
    Bic,
    Elbo,
    LikelihoodWeighting,
    ImportanceSampling,
}

impl Method {
    pub fn is_deterministic(self) -> bool {
        matches!(self, Method::Exact | Method::Quadrature)
    }
}

/// Monte Carlo diagnostics attached to sampled estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Standard error of the log estimate (delta method).
    pub std_error: f64,
    pub effective_sample_size: f64,
    pub n_samples: usize,
    /// Set when the effective sample size falls below 2.
    pub unreliable: bool,
}

/// A log-evidence value in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_value: f64,
    pub method: Method,
    pub diagnostics: Option<Diagnostics>,
}

impl EvidenceEstimate {
    pub fn exact(log_value: f64) -> Self {
        EvidenceEstimate {
            log_value,
            method: Method::Exact,
            diagnostics: None,
        }
    }

    pub fn quadrature(log_value: f64) -> Self {
        EvidenceEstimate {
            log_value,
            method: Method::Quadrature,
            diagnostics: None,
        }
    }

    pub fn sampled(log_value: f64, method: Method, diagnostics: Diagnostics) -> Self {
        debug_assert!(!method.is_deterministic());
        EvidenceEstimate {
            log_value,
            method,
            diagnostics: Some(diagnostics),
        }
    }

    pub fn std_error(&self) -> f64 {
        self.diagnostics.map_or(0.0, |d| d.std_error)
    }
}
