//! Monte Carlo measurement of the sampling-operator concentration bounds,
//! with log-log slope fits of the deviation against `pd`.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::instance::sample_mask;
use crate::linalg::{spectral_norm, DenseMatrix, FactorMatrix, ObservationMask};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    /// `|⟨P_Ω(W), P_Ω(Z)⟩ − p⟨W, Z⟩|`
    InnerProduct,
    /// `‖P_Ω(XXᵀ)X − pXXᵀX‖_F`
    CubicTerm,
    /// `‖P_Ω(W) − pW‖`
    Spectral,
    /// `|⟨P_Ω(N), P_Ω(W)⟩|`
    NoiseInner,
    /// `‖P_Ω(N)‖`
    NoiseSpectral,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::InnerProduct => "InnerProduct",
            Kind::CubicTerm => "CubicTerm",
            Kind::Spectral => "Spectral",
            Kind::NoiseInner => "NoiseInner",
            Kind::NoiseSpectral => "NoiseSpectral",
        }
    }

    pub fn is_noise(&self) -> bool {
        matches!(self, Kind::NoiseInner | Kind::NoiseSpectral)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationTrial {
    pub kind: Kind,
    pub d: usize,
    pub r: usize,
    pub p: f64,
    /// Row-incoherence ratio used in the predicted scale. `None` measures it
    /// on each sampled matrix.
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub sigma: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ConcentrationTrial {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.d < 2 {
            return bad(format!("d must be >= 2, got {}", self.d));
        }
        if self.r == 0 || self.r > self.d {
            return bad(format!("r must be in [1, d], got {}", self.r));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must be in (0, 1], got {}", self.p));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if self.sigma > 0.0 && !self.kind.is_noise() {
            return bad(format!("sigma is only used by noise kinds, got kind {}", self.kind));
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0 && nu.is_finite()) {
                return bad(format!("nu must be finite and > 0, got {nu}"));
            }
        }
        Ok(())
    }

    pub fn with_p(&self, p: f64) -> Self {
        Self { p, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub nu: f64,
    pub deviation: f64,
    pub predicted_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: ConcentrationTrial,
    pub rows: Vec<TrialRow>,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
    /// Median of the per-trial predicted scales.
    pub predicted_scale: f64,
    /// Median of `deviation / (predicted_scale·√(pd))`: the deviation with
    /// every factor except the `(pd)^{-1/2}` rate divided out.
    pub normalized: f64,
}

impl TrialResult {
    pub fn pd(&self) -> f64 {
        self.trial.p * self.trial.d as f64
    }
}

/// `max_i ‖W_i‖·√d / ‖W‖_F`; zero for the zero matrix.
pub fn row_incoherence(w: &DenseMatrix) -> f64 {
    let fro = w.frobenius_norm();
    if fro == 0.0 {
        return 0.0;
    }
    let max_row = (0..w.rows())
        .map(|i| w.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    max_row * (w.rows() as f64).sqrt() / fro
}

fn elem_inf(w: &DenseMatrix) -> f64 {
    w.as_slice().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Masked sum `Σ_Ω W_ij Z_ij`. With a full mask the summation order is the
/// same as the dense one, so `p = 1` deviations are exactly zero.
fn masked_inner(mask: &ObservationMask, w: &DenseMatrix, z: &DenseMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..mask.d() {
        for &j in mask.row(i) {
            s += w.get(i, j) * z.get(i, j);
        }
    }
    s
}

fn dense_inner(w: &DenseMatrix, z: &DenseMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            s += w.get(i, j) * z.get(i, j);
        }
    }
    s
}

fn check_square(mask: &ObservationMask, m: &DenseMatrix) -> Result<()> {
    if m.rows() != mask.d() || m.cols() != mask.d() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", mask.d()),
            found: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    Ok(())
}

pub fn inner_product_deviation(mask: &ObservationMask, p: f64, w: &DenseMatrix, z: &DenseMatrix) -> Result<f64> {
    check_square(mask, w)?;
    check_square(mask, z)?;
    Ok((masked_inner(mask, w, z) - p * dense_inner(w, z)).abs())
}

/// `Σ_j c_ij ⟨X_i, X_j⟩ X_j` over `j` in `cols(i)`.
fn gram_times_rows<'a>(x: &FactorMatrix, cols: impl Fn(usize) -> Box<dyn Iterator<Item = usize> + 'a>) -> FactorMatrix {
    let (d, r) = x.shape();
    let mut out = FactorMatrix::zeros(d, r);
    for i in 0..d {
        let xi = x.row(i).to_vec();
        let row = out.row_mut(i);
        for j in cols(i) {
            let xj = x.row(j);
            let c: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
            for (o, v) in row.iter_mut().zip(xj) {
                *o += c * v;
            }
        }
    }
    out
}

pub fn cubic_term_deviation(mask: &ObservationMask, p: f64, x: &FactorMatrix) -> Result<f64> {
    if x.d() != mask.d() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} rows", mask.d()),
            found: format!("{} rows", x.d()),
        });
    }
    let d = x.d();
    let masked = gram_times_rows(x, |i| Box::new(mask.row(i).iter().copied()));
    let full = gram_times_rows(x, |_| Box::new(0..d));
    Ok(masked.added(-p, &full).frobenius_norm())
}

pub fn spectral_deviation(mask: &ObservationMask, p: f64, w: &DenseMatrix) -> Result<f64> {
    check_square(mask, w)?;
    let mut diff = w.scale(-p);
    for i in 0..mask.d() {
        for &j in mask.row(i) {
            diff.set(i, j, w.get(i, j) - p * w.get(i, j));
        }
    }
    Ok(spectral_norm(&diff))
}

pub fn noise_inner_deviation(mask: &ObservationMask, n: &DenseMatrix, w: &DenseMatrix) -> Result<f64> {
    check_square(mask, n)?;
    check_square(mask, w)?;
    Ok(masked_inner(mask, n, w).abs())
}

pub fn noise_spectral_deviation(mask: &ObservationMask, n: &DenseMatrix) -> Result<f64> {
    check_square(mask, n)?;
    Ok(spectral_norm(&mask.project(n)?))
}

/// `ABᵀ` for Gaussian `d × r` factors, scaled to unit Frobenius norm.
pub fn random_low_rank(d: usize, r: usize, rng: &mut StreamRng) -> DenseMatrix {
    let a = rng::gaussian_factor(d, r, 1.0, rng);
    let b = rng::gaussian_factor(d, r, 1.0, rng);
    let w = a.outer(&b);
    let n = w.frobenius_norm();
    if n > 0.0 {
        w.scale(1.0 / n)
    } else {
        w
    }
}

/// Symmetric Gaussian matrix with `N(0, σ²)` entries on and above the diagonal.
pub fn symmetric_noise(d: usize, sigma: f64, rng: &mut StreamRng) -> DenseMatrix {
    let mut n = DenseMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let g: f64 = StandardNormal.sample(rng);
            n.set(i, j, sigma * g);
            n.set(j, i, sigma * g);
        }
    }
    n
}

struct Measured {
    deviation: f64,
    nu: f64,
    predicted: f64,
}

fn measure(t: &ConcentrationTrial, index: usize) -> Result<Measured> {
    let (d, r, p) = (t.d, t.r, t.p);
    let mut rng = rng::substream(t.seed, "concentration", index as u64);
    let mask_seed: u64 = rng.random();
    let mask = sample_mask(d, p, true, mask_seed)?;
    let df = d as f64;
    let log_d = df.ln();
    let pd = p * df;
    let nu_of = |m: &DenseMatrix| t.nu.unwrap_or_else(|| row_incoherence(m));
    Ok(match t.kind {
        Kind::InnerProduct => {
            let w = random_low_rank(d, r, &mut rng);
            let z = random_low_rank(d, r, &mut rng);
            Measured {
                deviation: inner_product_deviation(&mask, p, &w, &z)?,
                nu: nu_of(&w),
                predicted: (pd * r as f64 * elem_inf(&w) * elem_inf(&z) * w.frobenius_norm() * z.frobenius_norm() * log_d)
                    .sqrt(),
            }
        }
        Kind::CubicTerm => {
            let x = rng::gaussian_factor(d, r, 1.0, &mut rng);
            let nu = t.nu.unwrap_or_else(|| {
                let fro = x.frobenius_norm();
                if fro == 0.0 {
                    0.0
                } else {
                    x.max_row_norm() * df.sqrt() / fro
                }
            });
            Measured {
                deviation: cubic_term_deviation(&mask, p, &x)?,
                nu,
                predicted: p * (nu.powi(6) * r as f64 / pd).sqrt() * x.frobenius_norm().powi(3),
            }
        }
        Kind::Spectral => {
            let w = random_low_rank(d, r, &mut rng);
            let nu = nu_of(&w);
            Measured {
                deviation: spectral_deviation(&mask, p, &w)?,
                nu,
                predicted: p * w.frobenius_norm() * nu * (log_d / pd).sqrt(),
            }
        }
        Kind::NoiseInner => {
            let w = random_low_rank(d, r, &mut rng);
            let n = symmetric_noise(d, t.sigma, &mut rng);
            Measured {
                deviation: noise_inner_deviation(&mask, &n, &w)?,
                nu: nu_of(&w),
                predicted: (p * df * df * r as f64 * t.sigma * t.sigma * elem_inf(&w) * w.frobenius_norm() * log_d).sqrt(),
            }
        }
        Kind::NoiseSpectral => {
            let n = symmetric_noise(d, t.sigma, &mut rng);
            Measured {
                deviation: noise_spectral_deviation(&mask, &n)?,
                nu: t.nu.unwrap_or(0.0),
                predicted: p * t.sigma * df * (log_d / pd).sqrt(),
            }
        }
    })
}

/// Linear-interpolation quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Runs `trial.trials` independent draws of the configured deviation. Trial
/// `k` uses its own stream keyed by `(seed, k)`.
pub fn run_concentration(trial: &ConcentrationTrial, exec: Execution) -> Result<TrialResult> {
    trial.validate()?;
    let measured = exec::map_indexed(exec, trial.trials, |k| measure(trial, k));
    let mut rows = Vec::with_capacity(trial.trials);
    for (k, m) in measured.into_iter().enumerate() {
        let m = m?;
        rows.push(TrialRow {
            trial: k,
            nu: m.nu,
            deviation: m.deviation,
            predicted_scale: m.predicted,
        });
    }
    let devs = sorted(rows.iter().map(|r| r.deviation).collect());
    let preds = sorted(rows.iter().map(|r| r.predicted_scale).collect());
    let sqrt_pd = (trial.p * trial.d as f64).sqrt();
    let normalized = sorted(
        rows.iter()
            .map(|r| if r.predicted_scale > 0.0 { r.deviation / (r.predicted_scale * sqrt_pd) } else { 0.0 })
            .collect(),
    );
    Ok(TrialResult {
        trial: *trial,
        q25: quantile_sorted(&devs, 0.25),
        q50: quantile_sorted(&devs, 0.5),
        q75: quantile_sorted(&devs, 0.75),
        max: *devs.last().unwrap_or(&0.0),
        predicted_scale: quantile_sorted(&preds, 0.5),
        normalized: quantile_sorted(&normalized, 0.5),
        rows,
    })
}

/// Runs the same trial at each `p` in `grid`.
pub fn sweep_p(base: &ConcentrationTrial, grid: &[f64], exec: Execution) -> Result<Vec<TrialResult>> {
    grid.iter().map(|&p| run_concentration(&base.with_p(p), exec)).collect()
}

pub const CONCENTRATION_HEADER: &str = "kind,d,r,p,nu,sigma,trial,deviation,predicted_scale";

pub fn write_concentration_csv<W: Write>(results: &[TrialResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CONCENTRATION_HEADER}")?;
    for res in results {
        let t = &res.trial;
        for row in &res.rows {
            writeln!(
                w,
                "{},{},{},{},{:e},{:e},{},{:e},{:e}",
                t.kind, t.d, t.r, t.p, row.nu, t.sigma, row.trial, row.deviation, row.predicted_scale
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 4 grid points spanning 8x in pd, got {points} spanning {span:.2}x")]
    InsufficientGrid { points: usize, span: f64 },
    #[error("all deviations are equal; no slope reported")]
    Degenerate,
    #[error("deviations and pd values must be finite and positive")]
    NonPositive,
}

/// Least-squares slope of `log(deviation)` against `log(pd)`.
pub fn fit_scaling(points: &[(f64, f64)]) -> std::result::Result<ScalingFit, FitError> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && x.is_finite() && y > 0.0 && y.is_finite())) {
        return Err(FitError::NonPositive);
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let span = if points.is_empty() { 0.0 } else { hi / lo };
    if points.len() < 4 || span < 8.0 {
        return Err(FitError::InsufficientGrid { points: points.len(), span });
    }
    if points.iter().all(|p| p.1 == points[0].1) {
        return Err(FitError::Degenerate);
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ScalingFit { slope, intercept, r2 })
}

/// Fits the normalized medians of a `p` sweep.
pub fn fit_results(results: &[TrialResult]) -> std::result::Result<ScalingFit, FitError> {
    let pts: Vec<(f64, f64)> = results.iter().map(|r| (r.pd(), r.normalized)).collect();
    fit_scaling(&pts)
}
