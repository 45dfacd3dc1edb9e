//! Type-II maximum likelihood: ascent on LML or CLML over log-domain
//! hyperparameters (and raw mean parameters).
//!
//! Each step moves along the gradient rescaled by a running RMS of past
//! gradients, then backtracks until the objective does not decrease, so
//! accepted steps are monotone. Restarts after the first are perturbed
//! copies of the initialization.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{OrderedDataset, Orderings, SeedSpec};
use crate::error::{Error, Result};

use super::{GPModel, KernelKind, MeanFunction, MlpMean};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Lml,
    /// `log p(𝒟_{≥m} | 𝒟_{<m})` averaged over the given orderings, which stay
    /// fixed for the whole optimization.
    Clml {
        m: usize,
        orderings: Orderings,
    },
}

impl Objective {
    pub fn label(&self) -> &'static str {
        match self {
            Objective::Lml => "lml",
            Objective::Clml { .. } => "clml",
        }
    }
}

/// Which parameters the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperMask {
    pub lengthscale: bool,
    pub output_scale: bool,
    pub alpha: bool,
    pub noise: bool,
    pub mean: bool,
}

impl HyperMask {
    pub fn none() -> Self {
        HyperMask {
            lengthscale: false,
            output_scale: false,
            alpha: false,
            noise: false,
            mean: false,
        }
    }

    pub fn lengthscale_only() -> Self {
        HyperMask {
            lengthscale: true,
            ..Self::none()
        }
    }

    pub fn all() -> Self {
        HyperMask {
            lengthscale: true,
            output_scale: true,
            alpha: true,
            noise: true,
            mean: true,
        }
    }

    fn flags(&self, model: &GPModel) -> Vec<bool> {
        let mut f = vec![self.lengthscale, self.output_scale];
        if model.kernel.kind == KernelKind::Rq {
            f.push(self.alpha);
        }
        f.push(self.noise);
        f.extend(std::iter::repeat_n(self.mean, model.mean.n_params()));
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub objective: Objective,
    pub free: HyperMask,
    pub restarts: usize,
    pub max_steps: usize,
    /// Initial step length in scaled units.
    pub learning_rate: f64,
    /// Box applied to every free log-domain hyperparameter.
    pub log_bounds: (f64, f64),
    /// Standard deviation of the log-domain perturbation for restarts after the first.
    pub restart_scale: f64,
    /// Stop once the free-gradient norm falls below this.
    pub grad_tol: f64,
    pub seed: SeedSpec,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            objective: Objective::Lml,
            free: HyperMask::all(),
            restarts: 3,
            max_steps: 500,
            learning_rate: 0.05,
            log_bounds: (-7.0, 7.0),
            restart_scale: 0.5,
            grad_tol: 1e-6,
            seed: SeedSpec::new(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub restart: usize,
    pub step: usize,
    /// Log-domain kernel and noise hyperparameters (mean parameters omitted).
    pub log_hypers: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperOptTrace {
    pub objective: String,
    pub iterations: Vec<TraceStep>,
    /// Whether the selected restart met a stopping criterion before `max_steps`.
    pub converged: bool,
    pub best_restart: usize,
    pub initial_value: f64,
    pub final_value: f64,
}

struct ObjectiveEval<'a> {
    data: &'a OrderedDataset,
    prefixes: Vec<OrderedDataset>,
}

impl<'a> ObjectiveEval<'a> {
    fn new(data: &'a OrderedDataset, objective: &Objective) -> Result<Self> {
        let prefixes = match objective {
            Objective::Lml => Vec::new(),
            Objective::Clml { m, orderings } => {
                if *m < 1 || *m > data.len() {
                    return Err(Error::invalid(
                        "m",
                        format!("must lie in [1, {}], got {m}", data.len()),
                    ));
                }
                orderings.validate()?;
                (0..orderings.count())
                    .map(|k| Ok(orderings.view(data, k)?.prefix(m - 1)))
                    .collect::<Result<_>>()?
            }
        };
        Ok(ObjectiveEval { data, prefixes })
    }

    fn eval(&self, model: &GPModel) -> Result<(f64, Vec<f64>)> {
        let (mut v, mut g) = model.lml_and_grad(self.data)?;
        if self.prefixes.is_empty() {
            return Ok((v, g));
        }
        // LML(full) is ordering-invariant; only the prefixes differ.
        let k = self.prefixes.len() as f64;
        for p in &self.prefixes {
            let (pv, pg) = model.lml_and_grad(p)?;
            v -= pv / k;
            for (a, b) in g.iter_mut().zip(pg) {
                *a -= b / k;
            }
        }
        Ok((v, g))
    }
}

struct RestartResult {
    params: Vec<f64>,
    value: f64,
    converged: bool,
    trace: Vec<TraceStep>,
}

/// Maximize the configured objective; returns the best model over restarts.
pub fn fit_hypers(
    model: &GPModel,
    data: &OrderedDataset,
    config: &FitConfig,
) -> Result<(GPModel, HyperOptTrace)> {
    model.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidData(
            "cannot fit hyperparameters to an empty dataset".into(),
        ));
    }
    let free = config.free.flags(model);
    if !free.iter().any(|&f| f) {
        return Err(Error::invalid(
            "free",
            "at least one parameter must be free",
        ));
    }
    if config.restarts == 0 {
        return Err(Error::invalid("restarts", "must be at least 1"));
    }
    let (lo, hi) = config.log_bounds;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::invalid(
            "log_bounds",
            "lower bound must be below upper bound",
        ));
    }
    let objective = ObjectiveEval::new(data, &config.objective)?;
    let init = model.params();
    let initial_value = objective.eval(model)?.0;

    let results: Vec<Option<RestartResult>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let start = restart_point(model, &init, &free, r, config)?;
            ascend(model, &objective, start, &free, r, config)
        })
        .map(|res: Result<RestartResult>| res.ok())
        .collect();

    let mut best: Option<(usize, &RestartResult)> = None;
    for (r, res) in results.iter().enumerate() {
        if let Some(res) = res {
            if best.is_none_or(|(_, b)| res.value > b.value) {
                best = Some((r, res));
            }
        }
    }
    let (best_restart, best_res) =
        best.ok_or_else(|| Error::InvalidData("every restart failed".into()))?;
    let fitted = model.with_params(&best_res.params)?;
    let trace = HyperOptTrace {
        objective: config.objective.label().to_string(),
        iterations: results
            .iter()
            .flatten()
            .flat_map(|r| r.trace.iter().cloned())
            .collect(),
        converged: best_res.converged,
        best_restart,
        initial_value,
        final_value: best_res.value,
    };
    Ok((fitted, trace))
}

fn is_log_domain(model: &GPModel, i: usize) -> bool {
    i <= model.noise_index()
}

fn clamp(model: &GPModel, p: &mut [f64], free: &[bool], bounds: (f64, f64)) {
    for i in 0..p.len() {
        if free[i] && is_log_domain(model, i) {
            p[i] = p[i].clamp(bounds.0, bounds.1);
        }
    }
}

fn restart_point(
    model: &GPModel,
    init: &[f64],
    free: &[bool],
    r: usize,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    let mut p = init.to_vec();
    if r == 0 {
        clamp(model, &mut p, free, config.log_bounds);
        return Ok(p);
    }
    let seed = config.seed.child(r as u64);
    let mut rng = seed.rng();
    let k = model.noise_index();
    for i in 0..=k {
        if free[i] {
            p[i] += config.restart_scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    if free.get(k + 1).copied().unwrap_or(false) {
        match &model.mean {
            MeanFunction::Constant(_) => {
                p[k + 1] += config.restart_scale * rng.sample::<f64, _>(StandardNormal)
            }
            MeanFunction::Mlp(mlp) => {
                let fresh = MlpMean::init(mlp.widths.clone(), seed.child(0))?;
                p[k + 1..].copy_from_slice(&fresh.weights);
            }
        }
    }
    clamp(model, &mut p, free, config.log_bounds);
    Ok(p)
}

fn masked_norm(g: &[f64], free: &[bool]) -> f64 {
    g.iter()
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|(v, _)| v * v)
        .sum::<f64>()
        .sqrt()
}

fn ascend(
    model: &GPModel,
    objective: &ObjectiveEval,
    start: Vec<f64>,
    free: &[bool],
    restart: usize,
    config: &FitConfig,
) -> Result<RestartResult> {
    const BETA: f64 = 0.99;
    const STALL_STEPS: usize = 20;
    let k = model.noise_index();
    let eval = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g) = objective.eval(&model.with_params(p)?)?;
        if v.is_finite() {
            Ok((v, g))
        } else {
            Err(Error::InvalidData("non-finite objective".into()))
        }
    };
    let mut p = start;
    let (mut f, mut g) = eval(&p)?;
    let mut v = vec![0.0; p.len()];
    let mut lr = config.learning_rate;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut stall = 0;

    for step in 0..config.max_steps {
        let gn = masked_norm(&g, free);
        trace.push(TraceStep {
            restart,
            step,
            log_hypers: p[..=k].to_vec(),
            value: f,
            grad_norm: gn,
        });
        if gn < config.grad_tol {
            converged = true;
            break;
        }
        let bias = 1.0 - BETA.powi(step as i32 + 1);
        let mut dir = vec![0.0; p.len()];
        for i in 0..p.len() {
            if free[i] {
                v[i] = BETA * v[i] + (1.0 - BETA) * g[i] * g[i];
                dir[i] = g[i] / ((v[i] / bias).sqrt() + 1e-12);
            }
        }
        let mut accepted = false;
        while lr > 1e-12 {
            let mut cand: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + lr * d).collect();
            clamp(model, &mut cand, free, config.log_bounds);
            if cand == p {
                break;
            }
            if let Ok((fc, gc)) = eval(&cand) {
                if fc >= f {
                    stall = if fc - f < 1e-12 * (1.0 + f.abs()) {
                        stall + 1
                    } else {
                        0
                    };
                    p = cand;
                    f = fc;
                    g = gc;
                    accepted = true;
                    lr *= 1.2;
                    break;
                }
            }
            lr *= 0.5;
        }
        if !accepted || stall >= STALL_STEPS {
            converged = true;
            break;
        }
    }
    Ok(RestartResult {
        params: p,
        value: f,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{gp_generate, KernelSpec};

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (1..=n).map(|i| vec![i as f64]).collect()
    }

    #[test]
    fn never_ends_below_initialization() {
        let truth =
            GPModel::new(KernelSpec::rbf(4.0, 1.0), 0.2, MeanFunction::Constant(0.0)).unwrap();
        let d = gp_generate(&truth, &grid(30), SeedSpec::new(1)).unwrap();
        let start = GPModel::new(
            KernelSpec::rq(1.0, 0.5, 1.0),
            0.5,
            MeanFunction::Constant(0.3),
        )
        .unwrap();
        let cfg = FitConfig {
            max_steps: 100,
            ..Default::default()
        };
        let (fitted, trace) = fit_hypers(&start, &d, &cfg).unwrap();
        let v0 = start.lml(&d).unwrap().log_value;
        let v1 = fitted.lml(&d).unwrap().log_value;
        assert!(v1 >= v0);
        assert!((trace.final_value - v1).abs() < 1e-9);
        for r in 0..cfg.restarts {
            let vals: Vec<f64> = trace
                .iterations
                .iter()
                .filter(|s| s.restart == r)
                .map(|s| s.value)
                .collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn recovers_lengthscale_from_large_sample() {
        let truth =
            GPModel::new(KernelSpec::rbf(4.0, 1.0), 0.2, MeanFunction::Constant(0.0)).unwrap();
        let d = gp_generate(&truth, &grid(150), SeedSpec::new(21)).unwrap();
        let cfg = FitConfig {
            free: HyperMask::lengthscale_only(),
            restarts: 1,
            ..Default::default()
        };
        let (fitted, trace) = fit_hypers(&truth, &d, &cfg).unwrap();
        assert!(trace.converged);
        assert!(
            (fitted.kernel.lengthscale / 4.0 - 1.0).abs() < 0.15,
            "{}",
            fitted.kernel.lengthscale
        );
        assert!(fitted.lml_grad(&d).unwrap()[0].abs() < 1e-4);
    }

    #[test]
    fn deterministic_given_seed() {
        let truth =
            GPModel::new(KernelSpec::rbf(2.0, 1.0), 0.3, MeanFunction::Constant(0.0)).unwrap();
        let d = gp_generate(&truth, &grid(20), SeedSpec::new(2)).unwrap();
        let cfg = FitConfig {
            objective: Objective::Clml {
                m: 15,
                orderings: Orderings::random(4, SeedSpec::new(3)),
            },
            max_steps: 60,
            seed: SeedSpec::new(5),
            ..Default::default()
        };
        let a = fit_hypers(&truth, &d, &cfg).unwrap();
        let b = fit_hypers(&truth, &d, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn clml_gradient_matches_finite_differences() {
        let truth = GPModel::new(
            KernelSpec::rq(1.5, 1.0, 0.7),
            0.3,
            MeanFunction::Constant(0.1),
        )
        .unwrap();
        let d = gp_generate(&truth, &grid(14), SeedSpec::new(6)).unwrap();
        let obj = Objective::Clml {
            m: 9,
            orderings: Orderings::random(3, SeedSpec::new(8)),
        };
        let e = ObjectiveEval::new(&d, &obj).unwrap();
        let (_, g) = e.eval(&truth).unwrap();
        let p = truth.params();
        for i in 0..p.len() {
            let h = 1e-5;
            let mut a = p.clone();
            a[i] += h;
            let mut b = p.clone();
            b[i] -= h;
            let fd = (e.eval(&truth.with_params(&a).unwrap()).unwrap().0
                - e.eval(&truth.with_params(&b).unwrap()).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-4 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_empty_mask() {
        let m = GPModel::new(KernelSpec::rbf(1.0, 1.0), 0.1, MeanFunction::Constant(0.0)).unwrap();
        let d = gp_generate(&m, &grid(5), SeedSpec::new(0)).unwrap();
        let cfg = FitConfig {
            free: HyperMask::none(),
            ..Default::default()
        };
        assert!(fit_hypers(&m, &d, &cfg).is_err());
    }
}
