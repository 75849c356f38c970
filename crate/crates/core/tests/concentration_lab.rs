mod common;

use common::orthonormal;
use mc_landscape::concentration::{
    cubic_term_deviation, fit_results, fit_scaling, inner_product_deviation, noise_inner_deviation,
    noise_spectral_deviation, random_low_rank, run_concentration, spectral_deviation, sweep_p, write_concentration_csv,
    ConcentrationTrial, FitError, Kind, CONCENTRATION_HEADER,
};
use mc_landscape::instance::sample_mask;
use mc_landscape::linalg::{DenseMatrix, FactorMatrix};
use mc_landscape::{rng, Execution};
use proptest::prelude::*;

fn trial(kind: Kind, d: usize, p: f64, trials: usize) -> ConcentrationTrial {
    ConcentrationTrial {
        kind,
        d,
        r: 2,
        p,
        nu: None,
        sigma: if kind.is_noise() { 1.0 } else { 0.0 },
        trials,
        seed: 5,
    }
}

#[test]
fn full_observation_deviations_are_exactly_zero() {
    for kind in [Kind::InnerProduct, Kind::CubicTerm, Kind::Spectral] {
        let res = run_concentration(&trial(kind, 30, 1.0, 10), Execution::Parallel).unwrap();
        for row in &res.rows {
            assert_eq!(row.deviation, 0.0, "{kind}");
        }
    }
}

#[test]
fn zero_inputs_give_zero() {
    let mask = sample_mask(20, 0.3, true, 1).unwrap();
    let zero = DenseMatrix::zeros(20, 20);
    assert_eq!(inner_product_deviation(&mask, 0.3, &zero, &zero).unwrap(), 0.0);
    assert_eq!(spectral_deviation(&mask, 0.3, &zero).unwrap(), 0.0);
    assert_eq!(cubic_term_deviation(&mask, 0.3, &FactorMatrix::zeros(20, 2)).unwrap(), 0.0);
    assert_eq!(noise_inner_deviation(&mask, &zero, &zero).unwrap(), 0.0);
    assert_eq!(noise_spectral_deviation(&mask, &zero).unwrap(), 0.0);
    for kind in [Kind::NoiseInner, Kind::NoiseSpectral] {
        let t = ConcentrationTrial { sigma: 0.0, ..trial(kind, 20, 0.3, 5) };
        assert_eq!(run_concentration(&t, Execution::Sequential).unwrap().max, 0.0);
    }
}

#[test]
fn inner_product_relative_deviation_shrinks_with_p() {
    // the raw deviation grows like √(p(1−p)); relative to p it must shrink
    let grid = [0.05, 0.1, 0.2, 0.4];
    let res = sweep_p(&trial(Kind::InnerProduct, 200, 0.1, 50), &grid, Execution::Parallel).unwrap();
    for w in res.windows(2) {
        assert!(w[1].q50 / w[1].trial.p < w[0].q50 / w[0].trial.p);
        assert!(w[1].normalized < w[0].normalized);
    }
}

#[test]
fn exact_power_law_fit() {
    let pts: Vec<(f64, f64)> = [4.0f64, 8.0, 16.0, 32.0, 64.0].iter().map(|&x| (x, 0.7 * x.powf(-0.5))).collect();
    let fit = fit_scaling(&pts).unwrap();
    assert!((fit.slope + 0.5).abs() <= 1e-12);
    assert!((fit.r2 - 1.0).abs() <= 1e-12);
    let flat: Vec<(f64, f64)> = pts.iter().map(|&(x, _)| (x, 0.3)).collect();
    assert_eq!(fit_scaling(&flat), Err(FitError::Degenerate));
}

/// The sampling deviation carries a `(1 − p)` variance factor that the
/// `(pd)^{-1/2}` rate ignores. Over `pd ∈ [10, 160]` at `d = 200` the grid
/// reaches `p = 0.8`, where that factor bends the fit to about −0.79 (seed 5).
#[test]
#[ignore = "fitted slope is about -0.79 on this grid; see the doc comment"]
fn spectral_slope_on_wide_grid() {
    let grid: Vec<f64> = [10.0, 20.0, 40.0, 80.0, 160.0].iter().map(|pd| pd / 200.0).collect();
    let res = sweep_p(&trial(Kind::Spectral, 200, 0.05, 50), &grid, Execution::Parallel).unwrap();
    let fit = fit_results(&res).unwrap();
    assert!((-0.7..=-0.3).contains(&fit.slope), "slope {}", fit.slope);
}

#[test]
fn spectral_slope_at_small_p() {
    let grid = [0.02, 0.04, 0.08, 0.16, 0.32];
    let res = sweep_p(&trial(Kind::Spectral, 200, 0.02, 50), &grid, Execution::Parallel).unwrap();
    let fit = fit_results(&res).unwrap();
    assert!((-0.7..=-0.3).contains(&fit.slope), "slope {}", fit.slope);
    let mut nus: Vec<f64> = res.iter().flat_map(|r| r.rows.iter().map(|row| row.nu)).collect();
    nus.sort_by(f64::total_cmp);
    assert!(nus[nus.len() / 2] <= 3.0, "median nu {}", nus[nus.len() / 2]);
}

#[test]
fn csv_schema() {
    let res = run_concentration(&trial(Kind::NoiseSpectral, 20, 0.5, 3), Execution::Sequential).unwrap();
    let mut buf = Vec::new();
    write_concentration_csv(&[res], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CONCENTRATION_HEADER));
    assert_eq!(CONCENTRATION_HEADER, "kind,d,r,p,nu,sigma,trial,deviation,predicted_scale");
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("NoiseSpectral,20,2,0.5,"));
}

#[test]
fn deterministic_across_execution_modes() {
    for kind in [Kind::InnerProduct, Kind::CubicTerm, Kind::Spectral, Kind::NoiseInner, Kind::NoiseSpectral] {
        let t = trial(kind, 30, 0.3, 8);
        assert_eq!(
            run_concentration(&t, Execution::Sequential).unwrap(),
            run_concentration(&t, Execution::Parallel).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inner_product_invariant_under_factor_rotation(seed in 0u64..1_000_000, p in 0.05f64..0.95) {
        let d = 25;
        let mut s = rng::substream(seed, "rot", 0);
        let (a, b) = (rng::gaussian_factor(d, 3, 1.0, &mut s), rng::gaussian_factor(d, 3, 1.0, &mut s));
        let (c, e) = (rng::gaussian_factor(d, 3, 1.0, &mut s), rng::gaussian_factor(d, 3, 1.0, &mut s));
        let q1 = orthonormal(3, seed ^ 1);
        let q2 = orthonormal(3, seed ^ 2);
        let mask = sample_mask(d, p, true, seed).unwrap();
        let w = a.outer(&b);
        let z = c.outer(&e);
        let wq = a.mul_small(&q1).unwrap().outer(&b.mul_small(&q1).unwrap());
        let zq = c.mul_small(&q2).unwrap().outer(&e.mul_small(&q2).unwrap());
        let base = inner_product_deviation(&mask, p, &w, &z).unwrap();
        let rotated = inner_product_deviation(&mask, p, &wq, &zq).unwrap();
        prop_assert!((base - rotated).abs() <= 1e-10);
    }

    #[test]
    fn quantiles_are_ordered(seed in 0u64..1_000, p in 0.05f64..1.0, k in 0usize..5, trials in 1usize..12) {
        let kind = [Kind::InnerProduct, Kind::CubicTerm, Kind::Spectral, Kind::NoiseInner, Kind::NoiseSpectral][k];
        let t = ConcentrationTrial { seed, trials, ..trial(kind, 12, p, 1) };
        let res = run_concentration(&t, Execution::Sequential).unwrap();
        prop_assert!(res.q25 <= res.q50 && res.q50 <= res.q75 && res.q75 <= res.max);
        prop_assert!(res.rows.iter().all(|r| r.deviation >= 0.0));
    }

    #[test]
    fn low_rank_samples_have_unit_norm(seed in 0u64..1_000_000) {
        let w = random_low_rank(15, 2, &mut rng::substream(seed, "w", 0));
        prop_assert!((w.frobenius_norm() - 1.0).abs() <= 1e-12);
    }
}
