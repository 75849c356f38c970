//! First-order solvers for the completion objective: gradient descent with
//! Armijo backtracking, minibatch SGD over observed entries, and perturbed
//! gradient descent for leaving strict saddles.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Observation;
use crate::linalg::FactorMatrix;
use crate::objective::{EvalBreakdown, ObjectiveConfig};
use crate::rng;

/// Backtracking gives up once the trial step falls below this.
pub const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "SGD")]
    Sgd,
    #[serde(rename = "PerturbedGD")]
    PerturbedGd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Armijo {
    pub c1: f64,
    pub backtrack: f64,
    /// Initial trial step; `None` means `1/‖∇²f(X0)‖`.
    pub step0: Option<f64>,
}

impl Default for Armijo {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            backtrack: 0.5,
            step0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdSchedule {
    pub batch: usize,
    /// Base step; `None` means `1/‖∇²f(X0)‖`.
    pub base: Option<f64>,
    pub decay: f64,
    /// Evaluate `f` and `‖∇f‖` for the trace every this many steps.
    pub log_every: usize,
}

impl Default for SgdSchedule {
    fn default() -> Self {
        Self {
            batch: 64,
            base: None,
            decay: 1e-3,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    /// Frobenius radius of the uniform ball; `None` means `10·grad_tol`.
    pub radius: Option<f64>,
    /// Perturb when `‖∇f‖_F` drops to this; `None` means `10·grad_tol`.
    pub trigger_grad_norm: Option<f64>,
    pub cooldown_iters: usize,
    /// Decrease in `f` that counts as having left the previous stationary
    /// point; `None` means `1e-6·(1 + |f(X0)|)`.
    pub escape_decrease: Option<f64>,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            radius: None,
            trigger_grad_norm: None,
            cooldown_iters: 100,
            escape_decrease: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    /// `None` means `1e-8·(1 + f(X0))`.
    pub grad_tol: Option<f64>,
    pub armijo: Armijo,
    pub sgd: SgdSchedule,
    pub perturb: Perturbation,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::PerturbedGd,
            max_iters: 20_000,
            grad_tol: None,
            armijo: Armijo::default(),
            sgd: SgdSchedule::default(),
            perturb: Perturbation::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        if !(a.c1 > 0.0 && a.c1 < 1.0) {
            return Err(Error::InvalidParameter(format!("armijo.c1 must be in (0,1), got {}", a.c1)));
        }
        if !(a.backtrack > 0.0 && a.backtrack < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "armijo.backtrack must be in (0,1), got {}",
                a.backtrack
            )));
        }
        positive_opt("armijo.step0", a.step0)?;
        positive_opt("grad_tol", self.grad_tol)?;
        positive_opt("sgd.base", self.sgd.base)?;
        positive_opt("perturb.radius", self.perturb.radius)?;
        positive_opt("perturb.trigger_grad_norm", self.perturb.trigger_grad_norm)?;
        positive_opt("perturb.escape_decrease", self.perturb.escape_decrease)?;
        if self.sgd.batch == 0 {
            return Err(Error::InvalidParameter("sgd.batch must be >= 1".into()));
        }
        if self.sgd.log_every == 0 {
            return Err(Error::InvalidParameter("sgd.log_every must be >= 1".into()));
        }
        if !(self.sgd.decay >= 0.0) {
            return Err(Error::InvalidParameter("sgd.decay must be >= 0".into()));
        }
        Ok(())
    }
}

fn positive_opt(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => {
            Err(Error::InvalidParameter(format!("{name} must be > 0, got {x}")))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    GradTolReached,
    MaxIters,
    LineSearchStalled,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::GradTolReached => "GradTolReached",
            SolveStatus::MaxIters => "MaxIters",
            SolveStatus::LineSearchStalled => "LineSearchStalled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub f: f64,
    pub data_term: f64,
    /// Weighted penalty `λ·R(X)`.
    pub reg_term: f64,
    pub grad_norm: f64,
    pub step: f64,
    /// Cumulative single-entry gradient evaluations.
    pub cum_entry_grads: u64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x_final: FactorMatrix,
    pub status: SolveStatus,
    pub trace: Vec<TraceRecord>,
    /// Iterations at which a perturbation (or a rollback to the
    /// pre-perturbation point) changed the iterate outside a GD step.
    pub perturbations: Vec<usize>,
}

impl SolveResult {
    pub fn final_record(&self) -> &TraceRecord {
        self.trace.last().expect("trace always holds the initial point")
    }

    pub fn f_final(&self) -> f64 {
        self.final_record().f
    }
}

pub const TRACE_HEADER: &str = "iter,f,data_term,reg_term,grad_norm,step,cum_entry_grads";

/// Writes the trace as CSV with [`TRACE_HEADER`].
pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for t in trace {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            t.iter, t.f, t.data_term, t.reg_term, t.grad_norm, t.step, t.cum_entry_grads
        )?;
    }
    Ok(())
}

/// Gaussian start with `E‖X‖_F² = s²`, where `s²` estimates `‖Z‖_F²` from
/// the observed diagonal (or `‖M‖_F` from all observed entries when no
/// diagonal entry is observed).
pub fn random_init(d: usize, r: usize, obs: &Observation, seed: u64) -> FactorMatrix {
    let s2 = init_scale_sq(obs);
    let std = (s2 / (d * r) as f64).sqrt();
    rng::gaussian_factor(d, r, std, &mut rng::substream(seed, "init", 0))
}

pub fn init_scale_sq(obs: &Observation) -> f64 {
    let mask = obs.mask();
    let p = obs.p();
    if p <= 0.0 || mask.is_empty() {
        return 1.0;
    }
    let diag: f64 = (0..mask.d()).filter_map(|i| obs.value(i, i)).sum();
    if mask.diagonal_count() > 0 && diag > 0.0 {
        return diag / p;
    }
    let fro = (obs.observed_fro_sq() / p).sqrt();
    if fro > 0.0 {
        fro
    } else {
        1.0
    }
}

/// Resolved per-run constants.
struct Resolved {
    grad_tol: f64,
    step0: f64,
}

fn resolve(cfg: &ObjectiveConfig<'_>, scfg: &SolverConfig, x0: &FactorMatrix, f0: f64) -> Result<Resolved> {
    let grad_tol = scfg.grad_tol.unwrap_or(1e-8 * (1.0 + f0.abs()));
    let step0 = match scfg.armijo.step0 {
        Some(s) => s,
        None => {
            let h = cfg.hessian_norm_estimate(x0)?;
            if h > 0.0 {
                1.0 / h
            } else {
                1.0
            }
        }
    };
    Ok(Resolved { grad_tol, step0 })
}

fn record(iter: usize, e: &EvalBreakdown, lambda: f64, grad_norm: f64, step: f64, cum: u64) -> TraceRecord {
    TraceRecord {
        iter,
        f: e.total,
        data_term: e.data_term,
        reg_term: lambda * e.reg_term,
        grad_norm,
        step,
        cum_entry_grads: cum,
    }
}

/// One Armijo backtracking step along `−g`. Returns the accepted step and
/// the new point, or `None` if the step underflowed.
fn armijo_step(
    cfg: &ObjectiveConfig<'_>,
    armijo: &Armijo,
    x: &FactorMatrix,
    f: f64,
    g: &FactorMatrix,
    gn2: f64,
    mut t: f64,
) -> Option<(f64, FactorMatrix, EvalBreakdown)> {
    while t >= MIN_STEP {
        let trial = x.added(-t, g);
        let e = cfg.eval_unchecked(&trial);
        // the strict test rejects steps lost to rounding, so a run at the
        // precision floor stalls instead of accepting no-op steps forever
        if e.total.is_finite() && e.total <= f - armijo.c1 * t * gn2 && e.total < f {
            return Some((t, trial, e));
        }
        t *= armijo.backtrack;
    }
    None
}

fn check_inputs(cfg: &ObjectiveConfig<'_>, scfg: &SolverConfig, x0: &FactorMatrix, want: Method) -> Result<()> {
    scfg.validate()?;
    if scfg.method != want {
        return Err(Error::InvalidParameter(format!(
            "solver config method {:?} does not match {:?}",
            scfg.method, want
        )));
    }
    if x0.d() != cfg.d() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} rows", cfg.d()),
            found: format!("{} rows", x0.d()),
        });
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial point"));
    }
    Ok(())
}

/// Runs the solver selected by `scfg.method`.
pub fn solve(cfg: &ObjectiveConfig<'_>, scfg: &SolverConfig, x0: FactorMatrix) -> Result<SolveResult> {
    match scfg.method {
        Method::Gd => gradient_descent(cfg, scfg, x0),
        Method::Sgd => sgd(cfg, scfg, x0),
        Method::PerturbedGd => perturbed_gd(cfg, scfg, x0),
    }
}

/// Gradient descent with Armijo backtracking. The first trial step is
/// `step0`; later iterations start from twice the last accepted step.
pub fn gradient_descent(cfg: &ObjectiveConfig<'_>, scfg: &SolverConfig, x0: FactorMatrix) -> Result<SolveResult> {
    check_inputs(cfg, scfg, &x0, Method::Gd)?;
    descend(cfg, scfg, x0, false)
}

/// Gradient descent that perturbs the iterate whenever the gradient gets
/// small, then checks whether the perturbation led to a decrease of at
/// least `escape_decrease`. If it did not, the iterate is rolled back and
/// perturbation stops; plain descent then finishes the run.
pub fn perturbed_gd(cfg: &ObjectiveConfig<'_>, scfg: &SolverConfig, x0: FactorMatrix) -> Result<SolveResult> {
    check_inputs(cfg, scfg, &x0, Method::PerturbedGd)?;
    descend(cfg, scfg, x0, true)
}

struct Pending {
    x: FactorMatrix,
    f: f64,
    iter: usize,
}

fn descend(cfg: &ObjectiveConfig<'_>, scfg: &SolverConfig, x0: FactorMatrix, perturb: bool) -> Result<SolveResult> {
    let lambda = cfg.lambda();
    let n_entries = cfg.n_entries() as u64;
    let mut x = x0;
    let (mut e, mut g) = cfg.value_and_gradient_unchecked(&x);
    let mut cum = n_entries;
    let res = resolve(cfg, scfg, &x, e.total)?;
    let radius = scfg.perturb.radius.unwrap_or(10.0 * res.grad_tol);
    let trigger = scfg.perturb.trigger_grad_norm.unwrap_or(10.0 * res.grad_tol);
    let escape = scfg.perturb.escape_decrease.unwrap_or(1e-6 * (1.0 + e.total.abs()));

    let mut gn = g.frobenius_norm();
    let mut trace = vec![record(0, &e, lambda, gn, 0.0, cum)];
    let mut perturbations = Vec::new();
    // the first trial step is 2·step, i.e. step0
    let mut step = 0.5 * res.step0;
    let mut settled = !perturb;
    let mut pending: Option<Pending> = None;
    let mut n_perturb = 0u64;

    for iter in 1..=scfg.max_iters {
        if !settled && gn <= trigger {
            let ready = match &pending {
                None => true,
                Some(p) => iter - p.iter >= scfg.perturb.cooldown_iters || gn <= res.grad_tol,
            };
            if ready {
                let escaped = pending.as_ref().is_none_or(|p| p.f - e.total >= escape);
                if escaped {
                    pending = Some(Pending {
                        x: x.clone(),
                        f: e.total,
                        iter,
                    });
                    let xi = uniform_ball(x.d(), x.r(), radius, scfg.seed, n_perturb);
                    n_perturb += 1;
                    x.axpy(1.0, &xi);
                    (e, g) = cfg.value_and_gradient_unchecked(&x);
                    cum += n_entries;
                    gn = g.frobenius_norm();
                    perturbations.push(iter);
                } else {
                    let p = pending.take().expect("checked above");
                    if p.f < e.total {
                        x = p.x;
                        (e, g) = cfg.value_and_gradient_unchecked(&x);
                        cum += n_entries;
                        gn = g.frobenius_norm();
                        perturbations.push(iter);
                    }
                    settled = true;
                }
            }
        }
        if settled && gn <= res.grad_tol {
            return Ok(SolveResult {
                x_final: x,
                status: SolveStatus::GradTolReached,
                trace,
                perturbations,
            });
        }
        let gn2 = gn * gn;
        match armijo_step(cfg, &scfg.armijo, &x, e.total, &g, gn2, 2.0 * step) {
            Some((t, xn, _)) => {
                step = t;
                x = xn;
                (e, g) = cfg.value_and_gradient_unchecked(&x);
                cum += n_entries;
                gn = g.frobenius_norm();
                trace.push(record(iter, &e, lambda, gn, t, cum));
            }
            None => {
                return Ok(SolveResult {
                    x_final: x,
                    status: SolveStatus::LineSearchStalled,
                    trace,
                    perturbations,
                });
            }
        }
    }
    let status = if gn <= res.grad_tol && settled {
        SolveStatus::GradTolReached
    } else {
        SolveStatus::MaxIters
    };
    Ok(SolveResult {
        x_final: x,
        status,
        trace,
        perturbations,
    })
}

/// Uniform sample from the Frobenius ball of the given radius.
fn uniform_ball(d: usize, r: usize, radius: f64, seed: u64, index: u64) -> FactorMatrix {
    let mut rng = rng::substream(seed, "perturb", index);
    let mut v = FactorMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
    let n = v.frobenius_norm();
    let u: f64 = rng.random();
    let rho = radius * u.powf(1.0 / (d * r) as f64);
    v.scale_in_place(rho / n);
    v
}

/// Unbiased stochastic gradient from the given flat entry indices:
/// `(|Ω|/batch)·Σ_k ∇(entry k) + λ∇R(X)`.
pub fn stochastic_gradient(cfg: &ObjectiveConfig<'_>, x: &FactorMatrix, entries: &[usize]) -> FactorMatrix {
    let mut g = FactorMatrix::zeros(x.d(), x.r());
    if !entries.is_empty() {
        let w = cfg.n_entries() as f64 / entries.len() as f64;
        for &k in entries {
            cfg.add_entry_gradient(x, k, w, &mut g);
        }
    }
    cfg.add_reg_gradient(x, &mut g);
    g
}

/// Minibatch SGD with uniform sampling of observed ordered pairs (with
/// replacement) and step `base/(1 + decay·iter)`.
pub fn sgd(cfg: &ObjectiveConfig<'_>, scfg: &SolverConfig, x0: FactorMatrix) -> Result<SolveResult> {
    check_inputs(cfg, scfg, &x0, Method::Sgd)?;
    let n = cfg.n_entries();
    if n == 0 {
        return Err(Error::InvalidParameter("SGD needs at least one observed entry".into()));
    }
    let lambda = cfg.lambda();
    let mut x = x0;
    let (e0, g0) = cfg.value_and_gradient_unchecked(&x);
    let res = resolve(cfg, scfg, &x, e0.total)?;
    let base = scfg.sgd.base.unwrap_or(res.step0);
    let batch = scfg.sgd.batch;
    let mut rng = rng::substream(scfg.seed, "sgd", 0);
    let mut cum = 0u64;
    let mut trace = vec![record(0, &e0, lambda, g0.frobenius_norm(), 0.0, cum)];
    let mut idx = vec![0usize; batch];

    for iter in 1..=scfg.max_iters {
        idx.iter_mut().for_each(|k| *k = rng.random_range(0..n));
        let g = stochastic_gradient(cfg, &x, &idx);
        cum += batch as u64;
        let eta = base / (1.0 + scfg.sgd.decay * (iter - 1) as f64);
        x.axpy(-eta, &g);
        if iter % scfg.sgd.log_every == 0 || iter == scfg.max_iters {
            let (e, full) = cfg.value_and_gradient_unchecked(&x);
            let gn = full.frobenius_norm();
            trace.push(record(iter, &e, lambda, gn, eta, cum));
            if gn <= res.grad_tol {
                return Ok(SolveResult {
                    x_final: x,
                    status: SolveStatus::GradTolReached,
                    trace,
                    perturbations: Vec::new(),
                });
            }
        }
    }
    Ok(SolveResult {
        x_final: x,
        status: SolveStatus::MaxIters,
        trace,
        perturbations: Vec::new(),
    })
}
