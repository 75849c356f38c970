//! Certification of candidate points: first/second-order checks, recovery
//! error against the ground truth, the incoherence and singular-value
//! certificates, and the multi-start landscape scan.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::instance::{GroundTruth, HyperParams, Observation};
use crate::linalg::{procrustes_align, singular_extremes, DenseMatrix, FactorMatrix};
use crate::objective::ObjectiveConfig;
use crate::rng;
use crate::solvers::{gradient_descent, random_init, solve, Method, SolveStatus, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    GlobalMin,
    StrictSaddle,
    SpuriousLocalMin,
    NotStationary,
    /// Stationary and `τ`-second-order optimal, with no ground truth to
    /// decide whether it is global.
    SecondOrderStationary,
}

impl Classification {
    pub const ALL: [Classification; 5] = [
        Classification::GlobalMin,
        Classification::StrictSaddle,
        Classification::SpuriousLocalMin,
        Classification::NotStationary,
        Classification::SecondOrderStationary,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::GlobalMin => "GlobalMin",
            Classification::StrictSaddle => "StrictSaddle",
            Classification::SpuriousLocalMin => "SpuriousLocalMin",
            Classification::NotStationary => "NotStationary",
            Classification::SecondOrderStationary => "SecondOrderStationary",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertTolerances {
    /// Stationary when `‖∇f‖_F ≤ stationary·(1 + |f|)`.
    pub stationary: f64,
    /// Second-order relaxation; `None` takes `τ` from the hyperparameters,
    /// or `1e-4·‖H‖` when that is zero.
    pub tau: Option<f64>,
    /// Global when `‖XXᵀ − ZZᵀ‖_F / ‖ZZᵀ‖_F ≤ global_rel`.
    pub global_rel: f64,
    /// Tolerance for the Hessian eigenvalue iteration; `None` uses its default.
    pub eig_tol: Option<f64>,
}

impl CertTolerances {
    /// Defaults for multi-start scans.
    pub fn scan() -> Self {
        Self {
            stationary: 1e-6,
            tau: None,
            global_rel: 1e-2,
            eig_tol: None,
        }
    }

    /// Defaults for single noiseless runs.
    pub fn single_run() -> Self {
        Self {
            global_rel: 1e-3,
            ..Self::scan()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |n: &str, v: f64| Error::InvalidParameter(format!("tolerance {n} must be > 0, got {v}"));
        if !(self.stationary > 0.0) {
            return Err(bad("stationary", self.stationary));
        }
        if !(self.global_rel > 0.0) {
            return Err(bad("global_rel", self.global_rel));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return Err(bad("tau", t));
            }
        }
        if let Some(t) = self.eig_tol {
            if !(t > 0.0) {
                return Err(bad("eig_tol", t));
            }
        }
        Ok(())
    }
}

impl Default for CertTolerances {
    fn default() -> Self {
        Self::scan()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub f: f64,
    pub grad_norm: f64,
    pub stationary_tol: f64,
    pub lambda_min: f64,
    pub eig_converged: bool,
    pub tau_used: f64,
    pub classification: Classification,
    /// `‖XXᵀ − ZZᵀ‖_F`; absent without ground truth.
    pub recovery_fro: Option<f64>,
    pub recovery_rel: Option<f64>,
    pub procrustes_residual: Option<f64>,
    pub incoherence_ok: Option<bool>,
    pub sigma_min_ok: Option<bool>,
    /// Rank-one only.
    pub rank1_norm_ok: Option<bool>,
}

impl CertReport {
    pub fn is_stationary(&self) -> bool {
        self.grad_norm <= self.stationary_tol
    }
}

impl fmt::Display for CertReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3e}"));
        let flag = |v: Option<bool>| v.map_or("NA".to_string(), |x| x.to_string());
        write!(
            f,
            "classification={} f={:.3e} grad_norm={:.3e} lambda_min={:.3e} tau={:.3e} recovery_fro={} recovery_rel={} procrustes={} incoherence_ok={} sigma_min_ok={} rank1_norm_ok={}",
            self.classification,
            self.f,
            self.grad_norm,
            self.lambda_min,
            self.tau_used,
            opt(self.recovery_fro),
            opt(self.recovery_rel),
            opt(self.procrustes_residual),
            flag(self.incoherence_ok),
            flag(self.sigma_min_ok),
            flag(self.rank1_norm_ok),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryError {
    /// `‖XXᵀ − ZZᵀ‖_F`.
    pub gram_fro: f64,
    /// `min_R ‖X − ZR‖_F` over orthonormal `R`.
    pub procrustes_residual: f64,
}

/// Householder QR of a tall matrix given as columns; returns the `k × k`
/// triangular factor.
fn qr_r_factor(mut cols: Vec<Vec<f64>>) -> DenseMatrix {
    let k = cols.len();
    let n = cols.first().map_or(0, Vec::len);
    let mut r = DenseMatrix::zeros(k, k);
    for j in 0..k.min(n) {
        let norm: f64 = cols[j][j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if cols[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in cols.iter_mut().skip(j) {
            let proj: f64 = v.iter().zip(&col[j..]).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vnorm2;
            for (c, vi) in col[j..].iter_mut().zip(&v) {
                *c -= proj * vi;
            }
        }
    }
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate().take(j + 1) {
            r.set(i, j, *v);
        }
    }
    r
}

/// `‖XXᵀ − ZZᵀ‖_F` without forming `d × d` products.
///
/// With `B = [X Z] = QR`, `XXᵀ − ZZᵀ = Q (R₁R₁ᵀ − R₂R₂ᵀ) Qᵀ`, so the norm
/// is that of a `2r × 2r` matrix. Unlike expanding
/// `‖XᵀX‖² + ‖ZᵀZ‖² − 2‖ZᵀX‖²`, this does not cancel catastrophically when
/// `X` is close to a rotation of `Z`.
pub fn gram_difference_fro(x: &FactorMatrix, z: &FactorMatrix) -> f64 {
    if x == z {
        return 0.0;
    }
    let (d, r) = x.shape();
    let rz = z.r();
    let mut cols: Vec<Vec<f64>> = (0..r).map(|k| (0..d).map(|i| x.get(i, k)).collect()).collect();
    cols.extend((0..rz).map(|k| (0..d).map(|i| z.get(i, k)).collect::<Vec<f64>>()));
    let rf = qr_r_factor(cols);
    let n = r + rz;
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                let sign = if k < r { 1.0 } else { -1.0 };
                s += sign * rf.get(a, k) * rf.get(b, k);
            }
            acc += s * s;
        }
    }
    acc.sqrt()
}

pub fn recovery_error(x: &FactorMatrix, gt: &GroundTruth) -> Result<RecoveryError> {
    if x.shape() != gt.z().shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", gt.d(), gt.r()),
            found: format!("{}x{}", x.d(), x.r()),
        });
    }
    Ok(RecoveryError {
        gram_fro: gram_difference_fro(x, gt.z()),
        procrustes_residual: procrustes_align(x, gt.z())?.residual,
    })
}

/// Row-norm bound `max_i ‖X_i‖ ≤ 4·max{α, μ√(rp/λ)}` satisfied by
/// first-order stationary points.
pub fn incoherence_certificate(x: &FactorMatrix, cfg: &ObjectiveConfig<'_>, gt: &GroundTruth) -> bool {
    x.max_row_norm() <= incoherence_bound(cfg, gt)
}

pub fn incoherence_bound(cfg: &ObjectiveConfig<'_>, gt: &GroundTruth) -> f64 {
    let r = gt.r() as f64;
    let p = cfg.obs.p();
    let lambda = cfg.lambda();
    let second = if lambda > 0.0 {
        gt.mu() * (r * p / lambda).sqrt()
    } else {
        f64::INFINITY
    };
    4.0 * cfg.alpha().max(second)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormCertificates {
    /// `‖x‖² ≥ ¼‖z‖²`; rank-one only.
    pub rank1_norm_ok: Option<bool>,
    /// `σ_min(X) ≥ ¼σ_min(Z)`.
    pub sigma_min_ok: bool,
}

pub fn norm_certificates(x: &FactorMatrix, gt: &GroundTruth) -> NormCertificates {
    let rank1_norm_ok = (gt.r() == 1 && x.r() == 1)
        .then(|| x.frobenius_norm_sq() >= 0.25 * gt.z().frobenius_norm_sq());
    NormCertificates {
        rank1_norm_ok,
        sigma_min_ok: singular_extremes(x).sigma_min >= 0.25 * gt.sigma_min(),
    }
}

/// Classifies `x` against the first- and `τ`-relaxed second-order
/// conditions and, when ground truth is available, against recovery.
///
/// With noisy observations the global optimum no longer recovers `ZZᵀ`
/// exactly; a second-order point is then also accepted as global when
/// `f(X) ≤ f(Z)`, since `f(Z)` upper-bounds the optimal value.
pub fn certify_point(
    x: &FactorMatrix,
    cfg: &ObjectiveConfig<'_>,
    gt: Option<&GroundTruth>,
    tols: &CertTolerances,
) -> Result<CertReport> {
    tols.validate()?;
    let (e, g) = cfg.value_and_gradient(x)?;
    let grad_norm = g.frobenius_norm();
    let stationary_tol = tols.stationary * (1.0 + e.total.abs());
    let eig = cfg.min_hessian_eig(x, tols.eig_tol)?;
    let tau = match tols.tau {
        Some(t) => t,
        None if cfg.hyper.tau > 0.0 => cfg.hyper.tau,
        None => 1e-4 * eig.norm_estimate,
    };
    let stationary = grad_norm <= stationary_tol;
    let second_order = eig.lambda_min >= -tau;

    let mut report = CertReport {
        f: e.total,
        grad_norm,
        stationary_tol,
        lambda_min: eig.lambda_min,
        eig_converged: eig.converged,
        tau_used: tau,
        classification: Classification::NotStationary,
        recovery_fro: None,
        recovery_rel: None,
        procrustes_residual: None,
        incoherence_ok: None,
        sigma_min_ok: None,
        rank1_norm_ok: None,
    };

    let global = match gt {
        Some(gt) => {
            let rec = recovery_error(x, gt)?;
            let scale = gt.gram_fro();
            let rel = rec.gram_fro / scale;
            report.recovery_fro = Some(rec.gram_fro);
            report.recovery_rel = Some(rel);
            report.procrustes_residual = Some(rec.procrustes_residual);
            report.incoherence_ok = Some(incoherence_certificate(x, cfg, gt));
            let nc = norm_certificates(x, gt);
            report.sigma_min_ok = Some(nc.sigma_min_ok);
            report.rank1_norm_ok = nc.rank1_norm_ok;
            let recovered = if cfg.obs.sigma() == 0.0 {
                let f_tol = 0.5 * (tols.global_rel * scale).powi(2);
                rel <= tols.global_rel && e.data_term <= f_tol
            } else {
                let f_truth = cfg.objective(gt.z())?.total;
                rel <= tols.global_rel || e.total <= f_truth + 1e-12 * (1.0 + f_truth.abs())
            };
            Some(recovered)
        }
        None => None,
    };

    report.classification = match (stationary, second_order, global) {
        (false, _, _) => Classification::NotStationary,
        (true, false, _) => Classification::StrictSaddle,
        (true, true, Some(true)) => Classification::GlobalMin,
        (true, true, Some(false)) => Classification::SpuriousLocalMin,
        (true, true, None) => Classification::SecondOrderStationary,
    };
    Ok(report)
}

/// One start of a landscape scan.
#[derive(Debug, Clone)]
pub struct StartRecord {
    pub index: usize,
    pub start_seed: u64,
    /// `None` when the solver itself failed.
    pub status: Option<SolveStatus>,
    pub f_final: f64,
    pub report: CertReport,
    /// The endpoint was re-polished with tighter GD before certification.
    pub repolished: bool,
    pub x_final: Option<FactorMatrix>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub global_min: usize,
    pub strict_saddle: usize,
    pub spurious_local_min: usize,
    pub not_stationary: usize,
    pub second_order_stationary: usize,
}

impl ClassCounts {
    pub fn add(&mut self, c: Classification) {
        match c {
            Classification::GlobalMin => self.global_min += 1,
            Classification::StrictSaddle => self.strict_saddle += 1,
            Classification::SpuriousLocalMin => self.spurious_local_min += 1,
            Classification::NotStationary => self.not_stationary += 1,
            Classification::SecondOrderStationary => self.second_order_stationary += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.global_min + self.strict_saddle + self.spurious_local_min + self.not_stationary + self.second_order_stationary
    }
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "GlobalMin={} StrictSaddle={} SpuriousLocalMin={} NotStationary={} SecondOrderStationary={}",
            self.global_min, self.strict_saddle, self.spurious_local_min, self.not_stationary, self.second_order_stationary
        )
    }
}

#[derive(Debug, Clone)]
pub struct ScanSummary {
    pub n_starts: usize,
    pub counts: ClassCounts,
    /// Largest relative recovery error among stationary endpoints.
    pub worst_recovery_rel: Option<f64>,
    pub starts: Vec<StartRecord>,
}

impl ScanSummary {
    pub fn start_seeds(&self) -> Vec<u64> {
        self.starts.iter().map(|s| s.start_seed).collect()
    }
}

pub const SCAN_HEADER: &str =
    "start_seed,status,f_final,grad_norm,lambda_min,recovery_fro,procrustes,incoherence_ok,sigma_min_ok,classification";

pub fn write_scan_csv<W: Write>(summary: &ScanSummary, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCAN_HEADER}")?;
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:e}"));
    let flag = |v: Option<bool>| v.map_or("NA".to_string(), |x| x.to_string());
    for s in &summary.starts {
        let r = &s.report;
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{},{},{},{},{}",
            s.start_seed,
            s.status.map_or("Failed", |st| st.as_str()),
            s.f_final,
            r.grad_norm,
            r.lambda_min,
            opt(r.recovery_fro),
            opt(r.procrustes_residual),
            flag(r.incoherence_ok),
            flag(r.sigma_min_ok),
            r.classification,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub tols: CertTolerances,
    pub exec: Execution,
    /// Keep each endpoint in the summary.
    pub keep_points: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tols: CertTolerances::scan(),
            exec: Execution::Parallel,
            keep_points: false,
        }
    }
}

fn failed_report(e: &Error) -> CertReport {
    let _ = e;
    CertReport {
        f: f64::NAN,
        grad_norm: f64::NAN,
        stationary_tol: f64::NAN,
        lambda_min: f64::NAN,
        eig_converged: false,
        tau_used: f64::NAN,
        classification: Classification::NotStationary,
        recovery_fro: None,
        recovery_rel: None,
        procrustes_residual: None,
        incoherence_ok: None,
        sigma_min_ok: None,
        rank1_norm_ok: None,
    }
}

fn run_start(
    index: usize,
    gt: &GroundTruth,
    cfg: &ObjectiveConfig<'_>,
    scfg: &SolverConfig,
    base_seed: u64,
    opts: &ScanOptions,
) -> StartRecord {
    let start_seed = rng::derive_seed(base_seed, "start", index as u64);
    let x0 = random_init(gt.d(), gt.r(), cfg.obs, start_seed);
    let run_cfg = SolverConfig {
        seed: start_seed,
        ..*scfg
    };
    let solved = match solve(cfg, &run_cfg, x0) {
        Ok(s) => s,
        Err(e) => {
            return StartRecord {
                index,
                start_seed,
                status: None,
                f_final: f64::NAN,
                report: failed_report(&e),
                repolished: false,
                x_final: None,
            }
        }
    };
    let mut x = solved.x_final;
    let mut status = solved.status;
    let mut f_final = solved.trace.last().map_or(f64::NAN, |t| t.f);
    let mut report = match certify_point(&x, cfg, Some(gt), &opts.tols) {
        Ok(r) => r,
        Err(e) => failed_report(&e),
    };
    let mut repolished = false;
    if report.classification == Classification::SpuriousLocalMin {
        // rule out a premature stop before reporting a spurious minimum
        let tight = scfg.grad_tol.unwrap_or(1e-8 * (1.0 + f_final.abs())) / 10.0;
        let polish = SolverConfig {
            method: Method::Gd,
            grad_tol: Some(tight),
            seed: start_seed,
            ..*scfg
        };
        if let Ok(p) = gradient_descent(cfg, &polish, x.clone()) {
            if let Ok(r) = certify_point(&p.x_final, cfg, Some(gt), &opts.tols) {
                f_final = p.trace.last().map_or(f_final, |t| t.f);
                x = p.x_final;
                status = p.status;
                report = r;
                repolished = true;
            }
        }
    }
    StartRecord {
        index,
        start_seed,
        status: Some(status),
        f_final,
        report,
        repolished,
        x_final: opts.keep_points.then_some(x),
    }
}

/// Runs the configured solver from `n_starts` random initializations and
/// certifies every endpoint. Each start draws from its own stream keyed by
/// `(base_seed, start index)`, so the summary is identical for any
/// execution mode.
pub fn landscape_scan(
    gt: &GroundTruth,
    obs: &Observation,
    hyper: HyperParams,
    scfg: &SolverConfig,
    n_starts: usize,
    base_seed: u64,
    opts: &ScanOptions,
) -> Result<ScanSummary> {
    if n_starts == 0 {
        return Err(Error::InvalidParameter("n_starts must be >= 1".into()));
    }
    scfg.validate()?;
    opts.tols.validate()?;
    let cfg = ObjectiveConfig::new(hyper, obs)?;
    let starts = exec::map_indexed(opts.exec, n_starts, |i| run_start(i, gt, &cfg, scfg, base_seed, opts));
    let mut counts = ClassCounts::default();
    let mut worst: Option<f64> = None;
    for s in &starts {
        counts.add(s.report.classification);
        if s.report.is_stationary() {
            if let Some(rel) = s.report.recovery_rel {
                worst = Some(worst.map_or(rel, |w: f64| w.max(rel)));
            }
        }
    }
    Ok(ScanSummary {
        n_starts,
        counts,
        worst_recovery_rel: worst,
        starts,
    })
}
