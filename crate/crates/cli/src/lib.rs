//! Experiment harness over `evidence-core`.
//!
//! Each run writes `manifest.json` (resolved configuration, tool version,
//! seed), one or more CSV tables, and `summary.json` into the output
//! directory. Outputs depend only on the manifest.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use evidence_core::SeedSpec;

pub use config::{parse_override, resolve, ExperimentId, RunConfig};
pub use error::{CliError, CliResult};
pub use output::{Artifacts, Table};

use experiments::Experiment;

/// Resolve, run and write one experiment. Returns the written file names.
pub fn run(cfg: &RunConfig) -> CliResult<Vec<String>> {
    use experiments::*;
    match cfg.experiment {
        ExperimentId::Density => execute::<density::Density>(cfg),
        ExperimentId::Fourier => execute::<fourier::Fourier>(cfg),
        ExperimentId::GpRbfBias => execute::<gp_rbf_bias::GpRbfBias>(cfg),
        ExperimentId::GpRq => execute::<gp_rq::GpRq>(cfg),
        ExperimentId::GpMlpMean => execute::<gp_mlp_mean::GpMlpMean>(cfg),
        ExperimentId::LaplacePeriodic => execute::<laplace_periodic::LaplacePeriodic>(cfg),
        ExperimentId::SamplingCheck => execute::<sampling_check::SamplingCheck>(cfg),
        ExperimentId::PacBayes => execute::<pac_bayes::PacBayes>(cfg),
        ExperimentId::LearningCurve => execute::<generic::LearningCurveExperiment>(cfg),
        ExperimentId::ClmlSweep => execute::<generic::ClmlSweepExperiment>(cfg),
    }
}

fn execute<E: Experiment>(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let params: E::Params = resolve(&cfg.overrides)?;
    E::validate(&params)?;
    let artifacts = E::artifacts(&params, SeedSpec::new(cfg.seed))?;
    let manifest = output::manifest(cfg.experiment, cfg.seed, &serde_json::to_value(&params)?);
    output::write_all(&cfg.out, &manifest, &artifacts)
}
