//! Models whose evidence, posterior and predictive are available in closed
//! form (or, for the periodic model, by one-dimensional quadrature).

mod density;
mod fourier;
mod sine;

pub use density::{DensityParameterModel, GaussianDensityModel, PriorVariance};
pub use fourier::{
    fourier_generate, FourierDataConfig, FourierFunction, FourierRegressionModel, FourierSample,
    PriorStdRule,
};
pub use sine::PeriodicSineModel;

use crate::error::{Error, Result};

fn single(w: &[f64]) -> Result<f64> {
    match w {
        [u] => Ok(*u),
        _ => Err(Error::DimensionMismatch {
            expected: 1,
            actual: w.len(),
        }),
    }
}
