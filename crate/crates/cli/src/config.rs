//! Experiment configuration file.
//!
//! A single JSON document with optional blocks per command. Unknown keys are
//! rejected, and every error names the offending field by its dotted path.

use std::path::{Path, PathBuf};

use mc_landscape::concentration::{ConcentrationTrial, Kind};
use mc_landscape::instance::{HyperParams, Instance, InstanceSpec};
use mc_landscape::SolverConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: Option<InstanceBlock>,
    pub hyper: Option<HyperBlock>,
    pub solver: Option<SolverConfig>,
    pub scan: Option<ScanBlock>,
    pub concentration: Option<ConcentrationBlock>,
    /// Output directory used when `--out` is not given.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceBlock {
    pub d: Option<usize>,
    pub r: Option<usize>,
    pub p: Option<f64>,
    pub scale: Option<f64>,
    pub sigma: Option<f64>,
    pub include_diagonal: Option<bool>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperBlock {
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub n_starts: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationBlock {
    pub kind: Option<Kind>,
    pub d: Option<usize>,
    pub r: Option<usize>,
    pub p: Option<f64>,
    /// Sweep over these sampling rates instead of the single `p`.
    pub p_grid: Option<Vec<f64>>,
    pub nu: Option<f64>,
    #[serde(default)]
    pub sigma: f64,
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn missing(path: &str) -> CliError {
    CliError::Config(format!("missing required field {path}"))
}

fn require_block<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    block.as_ref().ok_or_else(|| missing(name))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                CliError::Config(inner.to_string())
            } else {
                CliError::Config(format!("{path}: {inner}"))
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn instance_spec(&self) -> Result<InstanceSpec, CliError> {
        let b = require_block(&self.instance, "instance")?;
        Ok(InstanceSpec {
            d: b.d.ok_or_else(|| missing("instance.d"))?,
            r: b.r.ok_or_else(|| missing("instance.r"))?,
            p: b.p.ok_or_else(|| missing("instance.p"))?,
            scale: b.scale.unwrap_or(1.0),
            sigma: b.sigma.unwrap_or(0.0),
            include_diagonal: b.include_diagonal.unwrap_or(true),
            seed: b.seed.unwrap_or(0),
        })
    }

    /// Hyperparameters with any absent field taken from the instance
    /// defaults.
    pub fn hyper(&self, inst: &Instance) -> Result<HyperParams, CliError> {
        let defaults = inst.default_hyperparams()?;
        let h = self.hyper.unwrap_or_default();
        Ok(HyperParams::new(
            h.alpha.unwrap_or(defaults.alpha),
            h.lambda.unwrap_or(defaults.lambda),
            h.tau.unwrap_or(defaults.tau),
        )?)
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let s = self.solver.unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    pub fn scan(&self) -> Result<(usize, u64), CliError> {
        let b = require_block(&self.scan, "scan")?;
        let n = b.n_starts.ok_or_else(|| missing("scan.n_starts"))?;
        if n == 0 {
            return Err(CliError::Config("scan.n_starts must be >= 1".into()));
        }
        Ok((n, b.base_seed))
    }

    /// The base trial and the grid of `p` values to sweep.
    pub fn concentration(&self) -> Result<(ConcentrationTrial, Vec<f64>), CliError> {
        let b = require_block(&self.concentration, "concentration")?;
        let grid = match (&b.p_grid, b.p) {
            (Some(g), None) if !g.is_empty() => g.clone(),
            (Some(_), None) => return Err(CliError::Config("concentration.p_grid must not be empty".into())),
            (None, Some(p)) => vec![p],
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "concentration.p and concentration.p_grid are mutually exclusive".into(),
                ))
            }
            (None, None) => return Err(missing("concentration.p")),
        };
        let trial = ConcentrationTrial {
            kind: b.kind.ok_or_else(|| missing("concentration.kind"))?,
            d: b.d.ok_or_else(|| missing("concentration.d"))?,
            r: b.r.unwrap_or(1),
            p: grid[0],
            nu: b.nu,
            sigma: b.sigma,
            trials: b.trials.ok_or_else(|| missing("concentration.trials"))?,
            seed: b.seed,
        };
        for &p in &grid {
            trial.with_p(p).validate()?;
        }
        Ok((trial, grid))
    }
}
