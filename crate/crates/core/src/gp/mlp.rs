use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SeedSpec;
use crate::error::{Error, Result};

/// Fully-connected ReLU network with a linear scalar output, used as a GP
/// mean function.
///
/// Weights are stored flat, layer by layer: the `out × in` matrix in
/// row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpMean {
    pub widths: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpMean {
    pub fn new(widths: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(
                "widths",
                "need at least two nonzero layer widths",
            ));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::invalid(
                "widths",
                "the output layer must have width 1",
            ));
        }
        let expected = param_count(&widths);
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: weights.len(),
            });
        }
        Ok(MlpMean { widths, weights })
    }

    /// Uniform `[−1/√fan_in, 1/√fan_in]` initialization for weights and biases.
    pub fn init(widths: Vec<usize>, seed: SeedSpec) -> Result<Self> {
        let mut rng = seed.rng();
        let mut weights = Vec::with_capacity(param_count(&widths));
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[1] * w[0] + w[1]) {
                weights.push(rng.random_range(-bound..bound));
            }
        }
        MlpMean::new(widths, weights)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Activations of every layer; the last entry holds the scalar output.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let layers = self.widths.len() - 1;
        for (li, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let mat = &self.weights[off..off + n_in * n_out];
            let bias = &self.weights[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let prev = acts.last().unwrap();
            let mut next: Vec<f64> = (0..n_out)
                .map(|o| {
                    bias[o]
                        + mat[o * n_in..(o + 1) * n_in]
                            .iter()
                            .zip(prev)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                })
                .collect();
            if li + 1 < layers {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            acts.push(next);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.activations(x).last().unwrap()[0]
    }

    /// Adds `upstream · ∂f(x)/∂weights` into `grad` by reverse accumulation.
    pub fn backward(&self, x: &[f64], upstream: f64, grad: &mut [f64]) {
        let acts = self.activations(x);
        let layers = self.widths.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.widths.windows(2) {
            offsets.push(off);
            off += w[1] * w[0] + w[1];
        }
        let mut delta = vec![upstream];
        for li in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[li], self.widths[li + 1]);
            let off = offsets[li];
            let input = &acts[li];
            for o in 0..n_out {
                for i in 0..n_in {
                    grad[off + o * n_in + i] += delta[o] * input[i];
                }
                grad[off + n_in * n_out + o] += delta[o];
            }
            if li > 0 {
                let mat = &self.weights[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        if input[i] > 0.0 {
                            (0..n_out).map(|o| delta[o] * mat[o * n_in + i]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(param_count(&[1, 50, 50, 1]), 100 + 2550 + 51);
        let m = MlpMean::init(vec![1, 50, 50, 1], SeedSpec::new(0)).unwrap();
        assert_eq!(m.weights.len(), 2701);
        assert!(MlpMean::new(vec![1, 2, 1], vec![0.0; 6]).is_err());
        assert!(MlpMean::new(vec![1, 2, 2], vec![0.0; 10]).is_err());
    }

    #[test]
    fn hand_computed_forward() {
        // hidden = relu([2x − 1, −x + 0.5]), out = 3·h₀ − h₁ + 0.25
        let m = MlpMean::new(vec![1, 2, 1], vec![2.0, -1.0, -1.0, 0.5, 3.0, -1.0, 0.25]).unwrap();
        assert!((m.forward(&[1.0]) - 3.25).abs() < 1e-15);
        assert!((m.forward(&[0.0]) - (-0.25)).abs() < 1e-15);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let m = MlpMean::init(vec![2, 7, 5, 1], SeedSpec::new(4)).unwrap();
        let x = [0.37, -1.2];
        let mut g = vec![0.0; m.weights.len()];
        m.backward(&x, 1.5, &mut g);
        let h = 1e-6;
        for (p, gp) in g.iter().enumerate() {
            let mut a = m.clone();
            a.weights[p] += h;
            let mut b = m.clone();
            b.weights[p] -= h;
            let fd = 1.5 * (a.forward(&x) - b.forward(&x)) / (2.0 * h);
            assert!(
                (fd - gp).abs() < 1e-6 * fd.abs().max(1.0),
                "param {p}: {fd} vs {gp}"
            );
        }
    }
}
