use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use mc_landscape::certify::{self, CertTolerances, ScanOptions};
use mc_landscape::concentration::{self, FitError};
use mc_landscape::instance::Instance;
use mc_landscape::solvers::{self, random_init};
use mc_landscape::{Execution, ObjectiveConfig};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const INSTANCE_FILE: &str = "instance.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SCAN_FILE: &str = "scan.csv";
pub const CONCENTRATION_FILE: &str = "concentration.csv";

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn build_instance(cfg: &ExperimentConfig) -> Result<Instance, CliError> {
    Ok(cfg.instance_spec()?.build()?)
}

#[derive(Serialize)]
struct InstanceRecord<'a> {
    instance: &'a mc_landscape::InstanceSpec,
    hyper: mc_landscape::HyperParams,
    mu: f64,
    kappa: f64,
    sigma_min: f64,
    sigma_max: f64,
    observed_pairs: usize,
}

pub fn gen(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let inst = build_instance(cfg)?;
    let hyper = cfg.hyper(&inst)?;
    let t = &inst.truth;
    let record = InstanceRecord {
        instance: &inst.spec,
        hyper,
        mu: t.mu(),
        kappa: t.kappa(),
        sigma_min: t.sigma_min(),
        sigma_max: t.sigma_max(),
        observed_pairs: inst.obs.mask().unordered_len(),
    };
    let mut w = create(out, INSTANCE_FILE)?;
    serde_json::to_writer_pretty(&mut w, &record).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    println!(
        "mu={} kappa={} alpha={} lambda={} tau={}",
        t.mu(),
        t.kappa(),
        hyper.alpha,
        hyper.lambda,
        hyper.tau
    );
    Ok(())
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let inst = build_instance(cfg)?;
    let hyper = cfg.hyper(&inst)?;
    let scfg = cfg.solver()?;
    let obj = ObjectiveConfig::new(hyper, &inst.obs)?;
    let x0 = random_init(inst.spec.d, inst.spec.r, &inst.obs, scfg.seed);
    let res = solvers::solve(&obj, &scfg, x0)?;
    let mut w = create(out, TRACE_FILE)?;
    solvers::write_trace_csv(&res.trace, &mut w)?;
    w.flush()?;
    let report = certify::certify_point(&res.x_final, &obj, Some(&inst.truth), &CertTolerances::single_run())?;
    println!("status={} iters={} {report}", res.status.as_str(), res.final_record().iter);
    Ok(())
}

/// Returns the number of spurious local minima found.
pub fn scan(cfg: &ExperimentConfig, out: &Path) -> Result<usize, CliError> {
    let inst = build_instance(cfg)?;
    let hyper = cfg.hyper(&inst)?;
    let scfg = cfg.solver()?;
    let (n_starts, base_seed) = cfg.scan()?;
    let opts = ScanOptions {
        exec: Execution::Parallel,
        ..ScanOptions::default()
    };
    let summary = certify::landscape_scan(&inst.truth, &inst.obs, hyper, &scfg, n_starts, base_seed, &opts)?;
    let mut w = create(out, SCAN_FILE)?;
    certify::write_scan_csv(&summary, &mut w)?;
    w.flush()?;
    let worst = summary
        .worst_recovery_rel
        .map_or("NA".to_string(), |v| format!("{v:.3e}"));
    println!("starts={} {} worst_recovery_rel={worst}", summary.n_starts, summary.counts);
    Ok(summary.counts.spurious_local_min)
}

pub fn conc(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let (trial, grid) = cfg.concentration()?;
    let results = concentration::sweep_p(&trial, &grid, Execution::Parallel)?;
    let mut w = create(out, CONCENTRATION_FILE)?;
    concentration::write_concentration_csv(&results, &mut w)?;
    w.flush()?;
    for r in &results {
        println!(
            "kind={} p={} pd={} median={:.4e} max={:.4e} predicted={:.4e} normalized={:.4e}",
            trial.kind,
            r.trial.p,
            r.pd(),
            r.q50,
            r.max,
            r.predicted_scale,
            r.normalized
        );
    }
    match concentration::fit_results(&results) {
        Ok(fit) => println!("slope={:.4} r2={:.4}", fit.slope, fit.r2),
        Err(e @ (FitError::Degenerate | FitError::InsufficientGrid { .. } | FitError::NonPositive)) => {
            eprintln!("warning: no slope reported: {e}");
        }
    }
    Ok(())
}
