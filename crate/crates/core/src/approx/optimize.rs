//! Damped Newton ascent used for MAP and MLE search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct Ascent {
    pub w: Vec<f64>,
    pub value: f64,
}

/// Maximize `f` from `init`. Newton steps are used where `−H` is positive
/// definite, gradient steps otherwise; every step is backtracked until the
/// objective increases. Points where `f` is `−∞` are never accepted.
pub(crate) fn maximize<F, G, H>(
    f: F,
    grad: G,
    hess: H,
    init: &[f64],
    max_iter: usize,
) -> Result<Ascent>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
    H: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let mut w = init.to_vec();
    let mut fw = f(&w)?;
    if !fw.is_finite() {
        return Err(Error::InvalidData("initial point has zero density".into()));
    }
    let mut g = grad(&w)?;
    for _ in 0..max_iter {
        let gv = DVector::from_column_slice(&g);
        let scale = 1.0 + w.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if gv.amax() < 1e-12 * scale.max(fw.abs()) {
            break;
        }
        let h = hess(&w)?;
        let neg = -h;
        let (dir, newton) = match neg.clone().cholesky() {
            Some(c) => (c.solve(&gv), true),
            None => (gv.clone() / neg.diagonal().amax().max(1.0), false),
        };
        if dir.amax() < 1e-15 * scale {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let fc = f(&cand)?;
            // A full Newton step whose change is below rounding of `f` is
            // still accepted so the gradient can be driven to zero.
            let flat = newton && t == 1.0 && fc >= fw - 4.0 * f64::EPSILON * fw.abs();
            if fc.is_finite() && (fc > fw || flat) {
                w = cand;
                fw = fc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        g = grad(&w)?;
        if !moved {
            break;
        }
    }
    Ok(Ascent { w, value: fw })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_maximum() {
        let a = maximize(
            |w| Ok(-(w[0] - 1.0).powi(2) - 3.0 * (w[1] + 2.0).powi(2)),
            |w| Ok(vec![-2.0 * (w[0] - 1.0), -6.0 * (w[1] + 2.0)]),
            |_| Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, -6.0]))),
            &[5.0, 5.0],
            100,
        )
        .unwrap();
        assert!((a.w[0] - 1.0).abs() < 1e-12 && (a.w[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn handles_non_concave_start() {
        // cos has a minimum at 0; ascend to ±π.
        let a = maximize(
            |w| Ok(-w[0].cos()),
            |w| Ok(vec![w[0].sin()]),
            |w| Ok(DMatrix::from_element(1, 1, w[0].cos())),
            &[0.3],
            200,
        )
        .unwrap();
        assert!((a.w[0] - std::f64::consts::PI).abs() < 1e-8);
    }
}
