use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constraints::{build_constraints, PolyhedronConstraint};
use super::factors::{binarize_returns, estimate_asset_correlation, estimate_movement_factors, ReturnSample};
use super::qp::{solve_qp, QpOptions};
use crate::error::{LatticeError, Result};
use crate::lattice::LatticeMarketSpec;

/// Relative eigenvalue floor below which the normal matrix counts as singular.
const RANK_TOLERANCE: f64 = 1e-10;

/// Result of the constrained least-squares fit for one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovFit {
    /// `(Phi_0, Phi_1, .., Phi_m)`.
    pub coeffs: Vec<f64>,
    pub rss: f64,
    /// `1/2 - LHS` of the polyhedron condition at `coeffs`.
    pub slack: f64,
    /// KKT residual of the mean-scaled problem (`RSS / N`).
    pub kkt_residual: f64,
    pub iterations: usize,
    /// The design matrix had dependent columns; `coeffs` is then the
    /// minimum-norm minimizer.
    pub rank_deficient: bool,
}

/// Design rows `[1, x(k-1), .., x(k-m)]` and targets with the correlation term removed.
struct Regression {
    design: DMatrix<f64>,
    target: DVector<f64>,
}

impl Regression {
    fn build(lattice: &[Vec<f64>], up: f64, down: f64, gamma_row: &[f64], asset: usize, m: usize) -> Self {
        let own = &lattice[asset];
        let l = own.len();
        let rows = l - m;
        let design = DMatrix::from_fn(rows, m + 1, |r, c| if c == 0 { 1.0 } else { own[r + m - c] });
        let target = DVector::from_fn(rows, |r, _| {
            let k = r + m;
            let cross: f64 = gamma_row.iter().zip(lattice).map(|(g, s)| g * s[k - 1]).sum();
            (own[k] - down) / (up - down) - cross
        });
        Self { design, target }
    }

    fn rss(&self, phi: &[f64]) -> f64 {
        let phi = DVector::from_column_slice(phi);
        (&self.target - &self.design * phi).norm_squared()
    }
}

/// Constrained least-squares fit of asset `asset`'s Markov coefficients with
/// the correlation matrix held fixed.
///
/// The lag regressors are the binarized returns in chronological order, so
/// the oldest `m` observations only seed the lags. Among several minimizers
/// the one of minimum Euclidean norm is returned.
pub fn fit_markov_coefficients(
    sample: &ReturnSample,
    up: &[f64],
    down: &[f64],
    gamma: &[Vec<f64>],
    asset: usize,
    m: usize,
) -> Result<MarkovFit> {
    let n = sample.assets();
    if up.len() != n || down.len() != n || gamma.len() != n {
        return Err(LatticeError::DimensionMismatch { expected: n, found: up.len() });
    }
    if sample.len() <= m {
        return Err(LatticeError::Estimation(format!(
            "need more than {m} observations, got {}",
            sample.len()
        )));
    }
    let constraint = build_constraints(up, down, gamma, asset, m)?;
    let lattice: Vec<Vec<f64>> =
        (0..n).map(|l| binarize_returns(&sample.series[l], up[l], down[l])).collect();
    let regression = Regression::build(&lattice, up[asset], down[asset], &gamma[asset], asset, m);
    fit_regression(&regression, &constraint)
}

fn fit_regression(regression: &Regression, constraint: &PolyhedronConstraint) -> Result<MarkovFit> {
    let m = constraint.memory;
    let rows = regression.design.nrows() as f64;
    let xtx = regression.design.transpose() * &regression.design / rows;
    let xty = regression.design.transpose() * &regression.target / rows;

    let eig = SymmetricEigen::new(xtx.clone());
    let floor = RANK_TOLERANCE * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let null_basis: Vec<usize> = (0..=m).filter(|&k| eig.eigenvalues[k] <= floor).collect();

    let budget = constraint.budget();
    if budget <= crate::PROBABILITY_TOLERANCE {
        // Only the center satisfies the constraint.
        return Ok(summarize(regression, constraint, constraint.center(), 0.0, 0, !null_basis.is_empty()));
    }

    let (a_rows, b_vals) = constraint.lifted_system();
    let dim = constraint.lifted_dim();
    let a = DMatrix::from_fn(a_rows.len(), dim, |r, c| a_rows[r][c]);
    let b = DVector::from_vec(b_vals);

    let mut h = DMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (m + 1, m + 1)).copy_from(&xtx);
    let mut g = DVector::zeros(dim);
    g.rows_mut(0, m + 1).copy_from(&(-&xty));

    let tau = budget / (2.0 * (1.0 + constraint.lag_half_spread * m as f64));
    let mut x0 = DVector::from_element(dim, tau);
    x0.rows_mut(0, m + 1).copy_from(&DVector::from_vec(constraint.center()));

    let options = QpOptions::default();
    let first = solve_qp(&h, &g, &a, &b, x0, options)?;
    let mut phi: Vec<f64> = first.x.rows(0, m + 1).iter().copied().collect();
    let mut kkt = first.kkt_residual;
    let mut iterations = first.iterations;

    if !null_basis.is_empty() {
        // All minimizers share the fitted values, so they differ by null
        // vectors of the design; pick the one of least norm.
        let z = DMatrix::from_fn(m + 1, null_basis.len(), |r, c| eig.eigenvectors[(r, null_basis[c])]);
        let k = z.ncols();
        let star = DVector::from_vec(phi.clone());
        let lifted = DVector::from_vec(constraint.lift(&phi));
        // Variables (eta, t, s) with phi = phi* + Z eta.
        let dim2 = k + dim - (m + 1);
        let mut a2 = DMatrix::zeros(a.nrows(), dim2);
        a2.view_mut((0, 0), (a.nrows(), k)).copy_from(&(a.columns(0, m + 1) * &z));
        a2.view_mut((0, k), (a.nrows(), dim - m - 1)).copy_from(&a.columns(m + 1, dim - m - 1));
        let b2 = &b - a.columns(0, m + 1) * &star;
        let mut h2 = DMatrix::zeros(dim2, dim2);
        h2.view_mut((0, 0), (k, k)).fill_with_identity();
        let mut g2 = DVector::zeros(dim2);
        g2.rows_mut(0, k).copy_from(&(z.transpose() * &star));
        let mut y0 = DVector::zeros(dim2);
        y0.rows_mut(k, dim - m - 1).copy_from(&lifted.rows(m + 1, dim - m - 1));
        let second = solve_qp(&h2, &g2, &a2, &b2, y0, options)?;
        let refined = &star + &z * second.x.rows(0, k);
        phi = refined.iter().copied().collect();
        iterations += second.iterations;
        // Report optimality of the least-squares problem at the refined point.
        let lifted = DVector::from_vec(constraint.lift(&phi));
        kkt = kkt.max(super::qp::kkt_residual(&h, &g, &a, &b, &lifted, &first.multipliers));
    }

    let slack = constraint.slack(&phi);
    if slack < 0.0 {
        phi = shrink_to_polyhedron(constraint, &phi);
    }
    Ok(summarize(regression, constraint, phi, kkt, iterations, !null_basis.is_empty()))
}

/// Pulls a point that overshoots the boundary by rounding error back along
/// the ray towards the center.
fn shrink_to_polyhedron(constraint: &PolyhedronConstraint, phi: &[f64]) -> Vec<f64> {
    let center = constraint.center();
    let inner = constraint.lhs(&center);
    let outer = constraint.lhs(phi);
    let lambda = ((0.5 - inner) / (outer - inner)).clamp(0.0, 1.0);
    center.iter().zip(phi).map(|(c, p)| c + lambda * (p - c)).collect()
}

fn summarize(
    regression: &Regression,
    constraint: &PolyhedronConstraint,
    coeffs: Vec<f64>,
    kkt_residual: f64,
    iterations: usize,
    rank_deficient: bool,
) -> MarkovFit {
    MarkovFit {
        rss: regression.rss(&coeffs),
        slack: constraint.slack(&coeffs),
        coeffs,
        kkt_residual,
        iterations,
        rank_deficient,
    }
}

/// Per-asset diagnostics of a full estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetFit {
    pub label: String,
    pub up: f64,
    pub down: f64,
    pub coeffs: Vec<f64>,
    pub rss: f64,
    pub slack: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub memory: usize,
    pub observations: usize,
    pub assets: Vec<AssetFit>,
}

/// Estimates a complete market from a return sample: movement factors,
/// correlation, then the per-asset coefficient fits in parallel. The initial
/// history holds the last `m` binarized returns, most recent first.
pub fn estimate_spec(sample: &ReturnSample, m: usize) -> Result<(LatticeMarketSpec, FitReport)> {
    let n = sample.assets();
    if n == 0 || m == 0 {
        return Err(LatticeError::InvalidParameter("need at least one asset and memory m >= 1".into()));
    }
    if sample.len() <= m {
        return Err(LatticeError::Estimation(format!(
            "need more than {m} observations, got {}",
            sample.len()
        )));
    }
    let factors = sample
        .series
        .iter()
        .zip(&sample.labels)
        .map(|(s, label)| {
            estimate_movement_factors(s).map_err(|e| LatticeError::Estimation(format!("{label}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (up, down): (Vec<f64>, Vec<f64>) = factors.into_iter().unzip();
    let gamma = estimate_asset_correlation(sample)?;
    log::debug!("estimated factors for {n} assets, fitting memory {m}");

    let fits = (0..n)
        .into_par_iter()
        .map(|i| fit_markov_coefficients(sample, &up, &down, &gamma, i, m))
        .collect::<Result<Vec<_>>>()?;

    let history = (0..n)
        .map(|i| {
            let lattice = binarize_returns(&sample.series[i], up[i], down[i]);
            lattice.iter().rev().take(m).copied().collect()
        })
        .collect();
    let spec = LatticeMarketSpec {
        n,
        m,
        up_factors: up.clone(),
        down_factors: down.clone(),
        markov_coeffs: fits.iter().map(|f| f.coeffs.clone()).collect(),
        asset_correlation: gamma,
        initial_history: history,
    };
    let report = FitReport {
        memory: m,
        observations: sample.len(),
        assets: fits
            .into_iter()
            .enumerate()
            .map(|(i, f)| AssetFit {
                label: sample.labels[i].clone(),
                up: up[i],
                down: down[i],
                coeffs: f.coeffs,
                rss: f.rss,
                slack: f.slack,
                kkt_residual: f.kkt_residual,
                iterations: f.iterations,
                rank_deficient: f.rank_deficient,
            })
            .collect(),
    };
    Ok((spec, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(series: Vec<f64>) -> ReturnSample {
        ReturnSample::new(vec!["A".into()], vec![series]).unwrap()
    }

    #[test]
    fn regression_layout() {
        let lattice = vec![vec![0.5, -0.5, 0.5, 0.5]];
        let reg = Regression::build(&lattice, 0.5, -0.5, &[0.0], 0, 2);
        assert_eq!(reg.design.nrows(), 2);
        assert_eq!(reg.design.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, -0.5, 0.5]);
        assert_eq!(reg.design.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.5, -0.5]);
        assert_eq!(reg.target.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn alternating_series_hits_boundary() {
        // Perfect reversal wants Phi = (0.5, -1), which lies on the boundary.
        let series: Vec<f64> = (0..200).map(|k| if k % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let fit = fit_markov_coefficients(&single(series), &[0.5], &[-0.5], &[vec![0.0]], 0, 1).unwrap();
        assert_relative_eq!(fit.coeffs[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(fit.coeffs[1], -1.0, epsilon = 1e-9);
        assert!(fit.slack >= -1e-10);
        assert!(fit.kkt_residual <= 1e-8);
    }

    #[test]
    fn constant_series_uses_minimum_norm() {
        // All-up data: only Phi_0 + 0.5 Phi_1 = 1 is identified.
        let series = vec![0.5; 50];
        let fit = fit_markov_coefficients(&single(series), &[0.5], &[-0.5], &[vec![0.0]], 0, 1).unwrap();
        assert!(fit.rank_deficient);
        assert_relative_eq!(fit.coeffs[0] + 0.5 * fit.coeffs[1], 1.0, epsilon = 1e-9);
        // Feasible minimizers form the segment Phi_1 in [0, 1]; the
        // least-norm one is (0.8, 0.4).
        assert_relative_eq!(fit.coeffs[0], 0.8, epsilon = 1e-9);
        assert_relative_eq!(fit.coeffs[1], 0.4, epsilon = 1e-9);
        assert!(fit.slack >= -1e-10);
        assert!(fit.rss <= 1e-16);
    }

    #[test]
    fn too_short_sample() {
        let err = fit_markov_coefficients(&single(vec![0.1, -0.1]), &[0.1], &[-0.1], &[vec![0.0]], 0, 2);
        assert!(matches!(err, Err(LatticeError::Estimation(_))));
    }
}
