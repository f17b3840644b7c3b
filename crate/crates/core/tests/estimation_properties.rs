mod common;

use lattice_core::estimation::{
    build_constraints, estimate_movement_factors, estimate_spec, feasibility_check, fit_markov_coefficients,
    ReturnSample,
};
use lattice_core::LatticeMarketSpec;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use std::sync::atomic::{AtomicUsize, Ordering};

static ACTIVE: AtomicUsize = AtomicUsize::new(0);

fn sample_from(spec: &LatticeMarketSpec, len: usize, seed: u64) -> ReturnSample {
    let path = spec.sample_return_path(len, seed).unwrap();
    let labels = (0..spec.n).map(|i| format!("A{i}")).collect();
    ReturnSample::from_rows(labels, &path.returns).unwrap()
}

/// RSS written out directly from the regression definition.
fn rss(sample: &ReturnSample, up: &[f64], down: &[f64], gamma: &[Vec<f64>], i: usize, m: usize, phi: &[f64]) -> f64 {
    let lat: Vec<Vec<f64>> = sample
        .series
        .iter()
        .enumerate()
        .map(|(l, s)| s.iter().map(|&x| if x >= 0.0 { up[l] } else { down[l] }).collect())
        .collect();
    (m..sample.len())
        .map(|k| {
            let y = (lat[i][k] - down[i]) / (up[i] - down[i]);
            let mut fit = phi[0];
            for j in 1..=m {
                fit += phi[j] * lat[i][k - j];
            }
            for l in 0..lat.len() {
                fit += gamma[i][l] * lat[l][k - 1];
            }
            (y - fit).powi(2)
        })
        .sum()
}

/// Minimum-norm ordinary least squares.
fn ols(sample: &ReturnSample, up: &[f64], down: &[f64], gamma: &[Vec<f64>], i: usize, m: usize) -> Vec<f64> {
    let lat: Vec<Vec<f64>> = sample
        .series
        .iter()
        .enumerate()
        .map(|(l, s)| s.iter().map(|&x| if x >= 0.0 { up[l] } else { down[l] }).collect())
        .collect();
    let rows = sample.len() - m;
    let x = DMatrix::from_fn(rows, m + 1, |r, c| if c == 0 { 1.0 } else { lat[i][r + m - c] });
    let y = DVector::from_fn(rows, |r, _| {
        let k = r + m;
        (lat[i][k] - down[i]) / (up[i] - down[i]) - (0..lat.len()).map(|l| gamma[i][l] * lat[l][k - 1]).sum::<f64>()
    });
    let beta = x.svd(true, true).solve(&y, 1e-10).unwrap();
    beta.iter().copied().collect()
}

fn interior_spec(phi: Vec<f64>, u: f64, d: f64) -> LatticeMarketSpec {
    let m = phi.len() - 1;
    LatticeMarketSpec::new(vec![u], vec![d], vec![phi], vec![vec![0.0]], vec![vec![u; m]]).unwrap()
}

#[test]
fn recovers_interior_coefficients() {
    let truth = vec![0.45, 0.3, -0.2];
    let spec = interior_spec(truth.clone(), 0.5, -0.4);
    let sample = sample_from(&spec, 10_000, 5);
    let (u, d) = estimate_movement_factors(&sample.series[0]).unwrap();
    assert!((u - 0.5).abs() <= 1e-12 && (d + 0.4).abs() <= 1e-12);
    let fit = fit_markov_coefficients(&sample, &[u], &[d], &[vec![0.0]], 0, 2).unwrap();
    for (a, b) in fit.coeffs.iter().zip(&truth) {
        assert!((a - b).abs() < 0.05, "{:?} vs {truth:?}", fit.coeffs);
    }
    assert!(fit.kkt_residual <= 1e-8);
    assert!(fit.slack >= -1e-10);
}

#[test]
fn recovers_with_known_cross_terms() {
    let spec = LatticeMarketSpec::new(
        vec![0.5, 0.4],
        vec![-0.4, -0.5],
        vec![vec![0.5, 0.25], vec![0.5, -0.2]],
        vec![vec![0.0, 0.3], vec![-0.25, 0.0]],
        vec![vec![0.5], vec![0.4]],
    )
    .unwrap();
    let sample = sample_from(&spec, 10_000, 8);
    for i in 0..2 {
        let fit = fit_markov_coefficients(&sample, &spec.up_factors, &spec.down_factors, &spec.asset_correlation, i, 1)
            .unwrap();
        for (a, b) in fit.coeffs.iter().zip(&spec.markov_coeffs[i]) {
            assert!((a - b).abs() < 0.05, "asset {i}: {:?}", fit.coeffs);
        }
    }
}

#[test]
fn interior_optimum_equals_least_squares() {
    let spec = interior_spec(vec![0.5, 0.1, 0.05], 0.3, -0.2);
    let sample = sample_from(&spec, 2_000, 9);
    let zero = [vec![0.0]];
    let beta = ols(&sample, &[0.3], &[-0.2], &zero, 0, 2);
    let c = build_constraints(&[0.3], &[-0.2], &zero, 0, 2).unwrap();
    assert!(c.slack(&beta) > 0.0);
    let fit = fit_markov_coefficients(&sample, &[0.3], &[-0.2], &zero, 0, 2).unwrap();
    for (a, b) in fit.coeffs.iter().zip(&beta) {
        assert!((a - b).abs() <= 1e-8);
    }
}

/// Points of the polyhedron by rejection sampling from its bounding box.
fn random_feasible_points(
    rng: &mut impl Rng,
    up: &[f64],
    down: &[f64],
    gamma: &[Vec<f64>],
    i: usize,
    m: usize,
    count: usize,
) -> Vec<Vec<f64>> {
    let c = build_constraints(up, down, gamma, i, m).unwrap();
    let reach = c.budget() / c.lag_half_spread;
    let center = c.center()[0];
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut z: Vec<f64> = (0..=m).map(|_| rng.random_range(-reach..reach)).collect();
        z[0] = center + rng.random_range(-1.0..1.0) * (c.budget() + c.lag_mid.abs() * reach * m as f64);
        if c.slack(&z) >= 0.0 {
            out.push(z);
        }
    }
    out
}

fn audit(spec: &LatticeMarketSpec, len: usize, seed: u64, m: usize) {
    let sample = sample_from(spec, len, seed);
    let (up, down, gamma) = (&spec.up_factors, &spec.down_factors, &spec.asset_correlation);
    let mut rng = common::rng(seed);
    for i in 0..spec.n {
        let fit = fit_markov_coefficients(&sample, up, down, gamma, i, m).unwrap();
        assert!(fit.kkt_residual <= 1e-8, "kkt {}", fit.kkt_residual);
        assert!(fit.slack >= -1e-10);
        if fit.slack < 1e-9 {
            ACTIVE.fetch_add(1, Ordering::Relaxed);
        }
        let best = rss(&sample, up, down, gamma, i, m, &fit.coeffs);
        assert!((best - fit.rss).abs() <= 1e-9 * best.max(1.0));
        let tol = 1e-9 * best.max(1.0);
        for z in random_feasible_points(&mut rng, up, down, gamma, i, m, 1000) {
            assert!(best <= rss(&sample, up, down, gamma, i, m, &z) + tol);
        }
        // radial projection of the unconstrained solution
        let c = build_constraints(up, down, gamma, i, m).unwrap();
        let beta = ols(&sample, up, down, gamma, i, m);
        let projected = if c.slack(&beta) >= 0.0 {
            beta
        } else {
            let center = c.center();
            let (inner, outer) = (c.lhs(&center), c.lhs(&beta));
            let t = (0.5 - inner) / (outer - inner);
            center.iter().zip(&beta).map(|(a, b)| a + t * (b - a)).collect()
        };
        assert!(best <= rss(&sample, up, down, gamma, i, m, &projected) + tol);
    }
}

#[test]
fn constrained_fit_beats_random_feasible_points() {
    // data generated on the boundary puts the unconstrained fit outside
    let reverting = interior_spec(vec![0.5, -1.0], 0.5, -0.5);
    audit(&reverting, 3_000, 1, 1);
    audit(&reverting, 3_000, 2, 3);
    let trending = interior_spec(vec![0.5, 1.0], 0.5, -0.5);
    audit(&trending, 3_000, 3, 2);
    let mut rng = common::rng(4);
    for seed in 0..4 {
        let spec = LatticeMarketSpec::random_feasible(&mut rng, 2, 2);
        audit(&spec, 1_500, 10 + seed, 2);
    }
    assert!(ACTIVE.load(Ordering::Relaxed) > 0, "no audited fit touched the boundary");
}

#[test]
fn estimated_spec_is_feasible_and_reuses_recent_history() {
    let mut rng = common::rng(6);
    let truth = LatticeMarketSpec::random_feasible(&mut rng, 3, 1);
    let sample = sample_from(&truth, 2_000, 6);
    for m in [1, 2, 5] {
        let (spec, report) = estimate_spec(&sample, m).unwrap();
        assert!(spec.validate().is_ok());
        assert!(feasibility_check(&spec).slack.iter().all(|&s| s >= -1e-10));
        assert_eq!(report.assets.len(), 3);
        for (i, a) in report.assets.iter().enumerate() {
            assert!(a.kkt_residual <= 1e-8);
            // last observation first
            let last = *sample.series[i].last().unwrap();
            assert_eq!(spec.initial_history[i][0], if last >= 0.0 { a.up } else { a.down });
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factor_round_trip(u in 0.001f64..0.99, d in -0.99f64..-0.001, ups in 1usize..50, downs in 1usize..50) {
        let mut series = vec![u; ups];
        series.extend(vec![d; downs]);
        let (eu, ed) = estimate_movement_factors(&series).unwrap();
        prop_assert!((eu - u).abs() <= 1e-12);
        prop_assert!((ed - d).abs() <= 1e-12);
    }
}
