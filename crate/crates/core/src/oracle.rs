//! Brute-force reference computations used only by unit tests.

/// `log ∫ exp(f(u)) du` over `[lo, hi]` by the trapezoid rule on `n` panels,
/// shifted by the grid maximum.
pub fn log_integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| f(lo + i as f64 * h)).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (v - max).exp()
        })
        .sum();
    max + (s * h).ln()
}

/// First two moments of the density proportional to `exp(f)` on `[lo, hi]`.
pub fn moments(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let h = (hi - lo) / n as f64;
    let us: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let vals: Vec<f64> = us.iter().map(|&u| f(u)).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = vals
        .iter()
        .enumerate()
        .map(|(i, v)| (if i == 0 || i == n { 0.5 } else { 1.0 }) * (v - max).exp())
        .collect();
    let z: f64 = w.iter().sum();
    let mean = w.iter().zip(&us).map(|(w, u)| w * u).sum::<f64>() / z;
    let var = w
        .iter()
        .zip(&us)
        .map(|(w, u)| w * (u - mean).powi(2))
        .sum::<f64>()
        / z;
    (mean, var)
}

pub fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}
