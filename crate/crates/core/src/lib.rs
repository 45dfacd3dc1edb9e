//! Bayesian evidence for small analytic models: exact marginal likelihoods,
//! conditional marginal likelihoods, Laplace/BIC/ELBO approximations,
//! Monte Carlo estimators and PAC-Bayes bounds.

pub mod approx;
pub mod data;
pub mod error;
pub mod evidence;
pub mod exact;
pub mod gaussian;
pub mod gp;
pub mod linalg;
pub mod model;
pub mod pac_bayes;
pub mod sampling;
pub mod selection;

#[cfg(test)]
mod oracle;

pub use data::{make_ordering, OrderedDataset, Orderings, Point, SeedSpec};
pub use error::{Error, Result};
pub use evidence::{Diagnostics, EvidenceEstimate, Method};
pub use gaussian::{kl_gaussian, GaussianDistribution};
pub use model::{DifferentiableModel, ExactEvidence, Prior};
