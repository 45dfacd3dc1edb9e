//! `x ~ 𝒩(sin w, 1)` with `w ~ U[−α, α]`. The likelihood is 2π-periodic in
//! `w`, so once α covers several periods the posterior is multimodal.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::data::OrderedDataset;
use crate::error::{Error, Result};
use crate::linalg::LN_2PI;
use crate::model::{DifferentiableModel, Prior};

use super::single;

#[derive(Debug, Clone)]
pub struct PeriodicSineModel {
    half_width: f64,
    prior: Prior,
}

impl PeriodicSineModel {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid(
                "half_width",
                format!("must be finite and > 0, got {half_width}"),
            ));
        }
        Ok(PeriodicSineModel {
            half_width,
            prior: Prior::uniform(vec![-half_width], vec![half_width])?,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// `Σ log 𝒩(xᵢ; sin w, 1) − log 2α` inside the support, `−∞` outside.
    pub fn log_joint_at(&self, data: &OrderedDataset, w: f64) -> Result<f64> {
        if w.abs() > self.half_width {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_lik(&data.scalars()?, w) - (2.0 * self.half_width).ln())
    }

    fn log_lik(&self, xs: &[f64], w: f64) -> f64 {
        let s = w.sin();
        xs.iter()
            .map(|x| -0.5 * LN_2PI - 0.5 * (x - s).powi(2))
            .sum()
    }
}

impl DifferentiableModel for PeriodicSineModel {
    fn dim(&self) -> usize {
        1
    }

    fn prior(&self) -> &Prior {
        &self.prior
    }

    fn log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<f64> {
        Ok(self.log_lik(&data.scalars()?, single(w)?))
    }

    fn grad_log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<Vec<f64>> {
        let w = single(w)?;
        let (s, c) = w.sin_cos();
        Ok(vec![data.scalars()?.iter().map(|x| (x - s) * c).sum()])
    }

    fn hessian_log_likelihood(&self, data: &OrderedDataset, w: &[f64]) -> Result<DMatrix<f64>> {
        let w = single(w)?;
        let (s, c) = w.sin_cos();
        let h = data.scalars()?.iter().map(|x| -c * c - (x - s) * s).sum();
        Ok(DMatrix::from_element(1, 1, h))
    }

    /// Images of `w` under `w ↦ π − w` and shifts by multiples of 2π that
    /// stay inside the prior support.
    fn symmetric_modes(&self, _data: &OrderedDataset, w: &[f64]) -> Vec<Vec<f64>> {
        let Ok(w) = single(w) else {
            return Vec::new();
        };
        let a = self.half_width;
        let k_max = ((a + w.abs() + PI) / (2.0 * PI)).ceil() as i64;
        let mut out = Vec::new();
        for base in [w, PI - w] {
            for k in -k_max..=k_max {
                let v = base + 2.0 * PI * k as f64;
                if v.abs() <= a && (v - w).abs() > 1e-12 {
                    out.push(vec![v]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::finite_difference_gradient;

    fn one(x: f64) -> OrderedDataset {
        OrderedDataset::from_scalars(&[x])
    }

    #[test]
    fn outside_support_is_neg_infinity() {
        let m = PeriodicSineModel::new(PI).unwrap();
        assert_eq!(m.log_joint_at(&one(0.5), 3.2).unwrap(), f64::NEG_INFINITY);
        assert_eq!(m.log_joint(&one(0.5), &[-4.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn joint_at_exact_fit() {
        let m = PeriodicSineModel::new(PI).unwrap();
        let v = m.log_joint_at(&one(0.5), PI / 6.0).unwrap();
        assert!((v - (-0.5 * LN_2PI - (2.0 * PI).ln())).abs() < 1e-12);
        assert!((v - (-2.7568)).abs() < 1e-4);
        assert!((m.log_joint(&one(0.5), &[PI / 6.0]).unwrap() - v).abs() < 1e-14);
    }

    #[test]
    fn reflection_symmetry() {
        let m = PeriodicSineModel::new(PI).unwrap();
        let d = one(0.3);
        for w in [-1.3, 0.0, 0.4, 1.1, 2.9] {
            let a = m.log_joint_at(&d, w).unwrap();
            let b = m.log_joint_at(&d, PI - w).unwrap();
            if (PI - w).abs() <= PI {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let m = PeriodicSineModel::new(10.0).unwrap();
        let d = OrderedDataset::from_scalars(&[0.5, -0.2, 1.3, 0.9]);
        for w in [-2.0, -0.3, 0.0, 0.7, 2.5] {
            let g = m.grad_log_likelihood(&d, &[w]).unwrap()[0];
            let fd =
                finite_difference_gradient(|v| m.log_likelihood(&d, v), &[w], 1e-6).unwrap()[0];
            assert!((g - fd).abs() < 1e-6 * g.abs().max(1.0));
            let h = m.hessian_log_likelihood(&d, &[w]).unwrap()[(0, 0)];
            let fdh =
                finite_difference_gradient(|v| Ok(m.grad_log_likelihood(&d, v)?[0]), &[w], 1e-6)
                    .unwrap()[0];
            assert!((h - fdh).abs() < 1e-6 * h.abs().max(1.0));
        }
    }

    #[test]
    fn curvature_at_pi_over_six() {
        let m = PeriodicSineModel::new(PI).unwrap();
        let h = m.hessian_log_likelihood(&one(0.5), &[PI / 6.0]).unwrap()[(0, 0)];
        assert!((h + 0.75).abs() < 1e-12);
    }

    #[test]
    fn symmetric_modes_share_the_joint() {
        let m = PeriodicSineModel::new(4.0 * PI).unwrap();
        let d = OrderedDataset::from_scalars(&[0.5, 0.8, 0.1]);
        let w = 0.6;
        let base = m.log_joint(&d, &[w]).unwrap();
        let modes = m.symmetric_modes(&d, &[w]);
        assert_eq!(modes.len(), 7);
        for v in modes {
            assert!(v[0].abs() <= 4.0 * PI);
            assert!((m.log_joint(&d, &v).unwrap() - base).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_half_width() {
        assert!(PeriodicSineModel::new(0.0).is_err());
        assert!(PeriodicSineModel::new(f64::INFINITY).is_err());
    }
}
