//! Problem instances: incoherent ground truth, Bernoulli masks, noisy
//! observations and the default hyperparameters derived from them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, singular_extremes, DenseMatrix, FactorMatrix, ObservationMask};
use crate::rng;

const FACTOR_RETRIES: usize = 10;

/// Ground-truth factor `Z` with its incoherence `μ` and condition number `κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    z: FactorMatrix,
    mu: f64,
    kappa: f64,
    sigma_min: f64,
    sigma_max: f64,
}

impl GroundTruth {
    /// Wraps an explicit factor, computing the tight `μ = √d·max‖Z_i‖/‖Z‖_F`.
    pub fn from_factor(z: FactorMatrix) -> Result<Self> {
        let ext = singular_extremes(&z);
        if !(ext.sigma_min > 0.0) {
            return Err(Error::InvalidParameter(
                "ground-truth factor must have full column rank".into(),
            ));
        }
        let mu = incoherence(&z);
        Ok(Self {
            mu,
            kappa: ext.sigma_max / ext.sigma_min,
            sigma_min: ext.sigma_min,
            sigma_max: ext.sigma_max,
            z,
        })
    }

    pub fn z(&self) -> &FactorMatrix {
        &self.z
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn d(&self) -> usize {
        self.z.d()
    }

    pub fn r(&self) -> usize {
        self.z.r()
    }

    /// `M = Z Zᵀ` as a dense matrix.
    pub fn gram(&self) -> DenseMatrix {
        self.z.outer(&self.z)
    }

    /// `‖Z Zᵀ‖_F`, computed as `‖ZᵀZ‖_F`.
    pub fn gram_fro(&self) -> f64 {
        self.z.gram().frobenius_norm()
    }

    /// `|Z Zᵀ|_∞`, the largest entry magnitude of `M`.
    pub fn gram_elem_inf(&self) -> f64 {
        let d = self.d();
        let mut m = 0.0f64;
        for i in 0..d {
            for j in i..d {
                m = m.max(dot(self.z.row(i), self.z.row(j)).abs());
            }
        }
        m
    }
}

/// Smallest `μ` with `‖Z_i‖ ≤ μ/√d · ‖Z‖_F` for every row.
pub fn incoherence(z: &FactorMatrix) -> f64 {
    let fro = z.frobenius_norm();
    if fro == 0.0 {
        return f64::INFINITY;
    }
    (z.d() as f64).sqrt() * z.max_row_norm() / fro
}

/// Gaussian ground truth with entries `N(0, scale²/d)`.
pub fn sample_factor(d: usize, r: usize, scale: f64, seed: u64) -> Result<GroundTruth> {
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!("need 1 <= r <= d, got r={r}, d={d}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let std = scale / (d as f64).sqrt();
    for attempt in 0..=FACTOR_RETRIES {
        let mut rng = rng::substream(seed, "factor", attempt as u64);
        let z = rng::gaussian_factor(d, r, std, &mut rng);
        if let Ok(gt) = GroundTruth::from_factor(z) {
            return Ok(gt);
        }
    }
    Err(Error::DegenerateFactor(FACTOR_RETRIES + 1))
}

/// Symmetric Bernoulli(p) mask: each unordered pair `{i, j}` is observed in
/// both orders with probability `p`; diagonal pairs only when requested.
pub fn sample_mask(d: usize, p: f64, include_diagonal: bool, seed: u64) -> Result<ObservationMask> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p={p} outside [0, 1]")));
    }
    let mut rng = rng::substream(seed, "mask", 0);
    let mut pairs = Vec::new();
    for i in 0..d {
        let start = if include_diagonal { i } else { i + 1 };
        for j in start..d {
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    ObservationMask::from_pairs(d, p, include_diagonal, pairs)
}

/// Revealed entries `P_Ω(M)` with `M = ZZᵀ + N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    mask: ObservationMask,
    values: Vec<f64>,
    sigma: f64,
}

impl Observation {
    /// Observes a dense symmetric matrix on the mask.
    pub fn from_dense(mask: ObservationMask, m: &DenseMatrix, sigma: f64) -> Result<Self> {
        let projected = mask.project(m)?;
        let values = mask.pairs().map(|(i, j)| projected.get(i, j)).collect();
        Ok(Self { mask, values, sigma })
    }

    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    pub fn d(&self) -> usize {
        self.mask.d()
    }

    pub fn p(&self) -> f64 {
        self.mask.p()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Observed values aligned with the mask's flat entry order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.mask.position(i, j).map(|k| self.values[k])
    }

    /// `P_Ω(M)` as a dense matrix.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.d(), self.d());
        for ((i, j), v) in self.mask.pairs().zip(&self.values) {
            out.set(i, j, *v);
        }
        out
    }

    /// `‖P_Ω(M)‖_F²`.
    pub fn observed_fro_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }
}

/// Reveals `ZZᵀ + N` on the mask, with `N` symmetric and one `N(0, σ²)` draw
/// per unordered pair.
///
/// The noise field is drawn for every pair regardless of the mask, so for a
/// fixed seed the noise is `σ·G` with the same `G` at every noise level.
pub fn observe(gt: &GroundTruth, mask: &ObservationMask, sigma: f64, seed: u64) -> Result<Observation> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    if mask.d() != gt.d() {
        return Err(Error::DimensionMismatch {
            expected: format!("mask dimension {}", gt.d()),
            found: format!("{}", mask.d()),
        });
    }
    let d = gt.d();
    let noise = if sigma > 0.0 {
        let mut rng = rng::substream(seed, "noise", 0);
        let mut n = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let g: f64 = StandardNormal.sample(&mut rng);
                n.set(i, j, sigma * g);
                n.set(j, i, sigma * g);
            }
        }
        Some(n)
    } else {
        None
    };
    let z = gt.z();
    let values = mask
        .pairs()
        .map(|(i, j)| {
            let clean = dot(z.row(i), z.row(j));
            clean + noise.as_ref().map_or(0.0, |n| n.get(i, j))
        })
        .collect();
    Ok(Observation {
        mask: mask.clone(),
        values,
        sigma,
    })
}

/// Regularizer threshold `α`, weight `λ` and second-order relaxation `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl HyperParams {
    pub fn new(alpha: f64, lambda: f64, tau: f64) -> Result<Self> {
        let h = Self { alpha, lambda, tau };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// `α = 10μ/√d`, `λ = μ²p/α²` in the rank-one setting; otherwise
/// `α = 4μκr/√d`, `λ = μ²rp/α²`. In both cases `τ = 0.01·p·σ_min(Z)`.
pub fn default_hyperparams(gt: &GroundTruth, p: f64, rank_one: bool) -> Result<HyperParams> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!("p must be > 0, got {p}")));
    }
    let sqrt_d = (gt.d() as f64).sqrt();
    let mu = gt.mu();
    let r = gt.r() as f64;
    let (alpha, lambda) = if rank_one {
        let alpha = 10.0 * mu / sqrt_d;
        (alpha, mu * mu * p / (alpha * alpha))
    } else {
        let alpha = 4.0 * mu * gt.kappa() * r / sqrt_d;
        (alpha, mu * mu * r * p / (alpha * alpha))
    };
    HyperParams::new(alpha, lambda, 0.01 * p * gt.sigma_min())
}

/// Everything needed to regenerate an instance bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub d: usize,
    pub r: usize,
    pub seed: u64,
    pub scale: f64,
    pub p: f64,
    pub sigma: f64,
    pub include_diagonal: bool,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub truth: GroundTruth,
    pub obs: Observation,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        let truth = sample_factor(self.d, self.r, self.scale, self.seed)?;
        let mask = sample_mask(self.d, self.p, self.include_diagonal, self.seed)?;
        let obs = observe(&truth, &mask, self.sigma, self.seed)?;
        Ok(Instance {
            spec: self.clone(),
            truth,
            obs,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("instance record: {e}")))
    }
}

impl Instance {
    pub fn default_hyperparams(&self) -> Result<HyperParams> {
        default_hyperparams(&self.truth, self.spec.p, self.spec.r == 1)
    }
}
