use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Rq,
}

/// Stationary kernel on Euclidean inputs.
///
/// RBF: `s·exp(−r²/2l²)`. RQ: `s·(1 + r²/2αl²)^(−α)`, which tends to RBF as
/// `α → ∞`. `alpha` is ignored for RBF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscale: f64,
    pub output_scale: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn rbf(lengthscale: f64, output_scale: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            lengthscale,
            output_scale,
            alpha: 1.0,
        }
    }

    pub fn rq(lengthscale: f64, output_scale: f64, alpha: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Rq,
            lengthscale,
            output_scale,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.lengthscale) {
            return Err(Error::invalid(
                "lengthscale",
                format!("must be > 0, got {}", self.lengthscale),
            ));
        }
        if !pos(self.output_scale) {
            return Err(Error::invalid(
                "output_scale",
                format!("must be > 0, got {}", self.output_scale),
            ));
        }
        if self.kind == KernelKind::Rq && !pos(self.alpha) {
            return Err(Error::invalid(
                "alpha",
                format!("must be > 0, got {}", self.alpha),
            ));
        }
        Ok(())
    }

    /// Number of log-domain kernel hyperparameters: l, s and, for RQ, α.
    pub fn n_hypers(&self) -> usize {
        match self.kind {
            KernelKind::Rbf => 2,
            KernelKind::Rq => 3,
        }
    }

    pub fn eval_sq(&self, r2: f64) -> f64 {
        let z = r2 / (2.0 * self.lengthscale * self.lengthscale);
        match self.kind {
            KernelKind::Rbf => self.output_scale * (-z).exp(),
            KernelKind::Rq => self.output_scale * (-self.alpha * (z / self.alpha).ln_1p()).exp(),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval_sq(sq_dist(a, b))
    }

    /// Derivatives of `k(r²)` with respect to `log l`, `log s` and (RQ) `log α`.
    pub fn log_grad_sq(&self, r2: f64) -> [f64; 3] {
        let k = self.eval_sq(r2);
        let l2 = self.lengthscale * self.lengthscale;
        match self.kind {
            KernelKind::Rbf => [k * r2 / l2, k, 0.0],
            KernelKind::Rq => {
                let t = r2 / (2.0 * self.alpha * l2);
                let u = 1.0 + t;
                [k * r2 / (l2 * u), k, k * self.alpha * (t / u - t.ln_1p())]
            }
        }
    }

    pub fn matrix(&self, xs: &[&[f64]]) -> DMatrix<f64> {
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(xs[i], xs[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    pub fn cross(&self, a: &[&[f64]], b: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval(a[i], b[j]))
    }

    /// `∂K/∂θ` for each log-domain kernel hyperparameter.
    pub fn matrix_log_grads(&self, xs: &[&[f64]]) -> Vec<DMatrix<f64>> {
        let n = xs.len();
        let h = self.n_hypers();
        let mut out = vec![DMatrix::zeros(n, n); h];
        for i in 0..n {
            for j in 0..=i {
                let g = self.log_grad_sq(sq_dist(xs[i], xs[j]));
                for (p, m) in out.iter_mut().enumerate() {
                    m[(i, j)] = g[p];
                    m[(j, i)] = g[p];
                }
            }
        }
        out
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let k = KernelSpec::rbf(2.0, 3.0);
        assert!((k.eval(&[1.0], &[3.0]) - 3.0 * (-0.5f64).exp()).abs() < 1e-15);
        let q = KernelSpec::rq(2.0, 3.0, 0.5);
        assert!((q.eval(&[1.0], &[3.0]) - 3.0 * 2.0f64.powf(-0.5)).abs() < 1e-15);
        assert_eq!(k.eval(&[0.3, 1.0], &[0.3, 1.0]), 3.0);
    }

    #[test]
    fn rq_approaches_rbf() {
        let rbf = KernelSpec::rbf(0.7, 1.3);
        for r2 in [0.01, 0.5, 2.0, 9.0] {
            let gaps: Vec<f64> = [1e1, 1e3, 1e6]
                .iter()
                .map(|&a| (KernelSpec::rq(0.7, 1.3, a).eval_sq(r2) - rbf.eval_sq(r2)).abs())
                .collect();
            assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
            assert!(gaps[2] < 1e-5);
        }
    }

    #[test]
    fn log_grads_match_finite_differences() {
        let h = 1e-6;
        for spec in [
            KernelSpec::rbf(0.8, 1.7),
            KernelSpec::rq(0.8, 1.7, 0.3),
            KernelSpec::rq(1.9, 0.4, 25.0),
        ] {
            for r2 in [0.0, 0.2, 1.5, 7.0] {
                let g = spec.log_grad_sq(r2);
                let bump = |p: usize, e: f64| {
                    let mut s = spec;
                    match p {
                        0 => s.lengthscale *= e.exp(),
                        1 => s.output_scale *= e.exp(),
                        _ => s.alpha *= e.exp(),
                    }
                    s.eval_sq(r2)
                };
                for (p, gp) in g.iter().enumerate().take(spec.n_hypers()) {
                    let fd = (bump(p, h) - bump(p, -h)) / (2.0 * h);
                    assert!(
                        (fd - gp).abs() < 1e-7 * gp.abs().max(1.0),
                        "{spec:?} r2={r2} p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn validation() {
        assert!(KernelSpec::rbf(0.0, 1.0).validate().is_err());
        assert!(KernelSpec::rq(1.0, 1.0, -1.0).validate().is_err());
        assert!(KernelSpec {
            alpha: -1.0,
            ..KernelSpec::rbf(1.0, 1.0)
        }
        .validate()
        .is_ok());
    }
}
