//! Small dense convex quadratic programs solved with a primal active-set
//! method.
//!
//! The Hessian only has to be positive semidefinite: zero-curvature
//! directions are followed as rays until a constraint blocks them, so the
//! feasible set must be bounded along any such descent direction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    pub max_iterations: usize,
    /// Absolute tolerance on feasibility, reduced gradients and multipliers.
    pub tolerance: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iterations: 1000, tolerance: 1e-11 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per inequality row; zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Max of stationarity, primal infeasibility, dual infeasibility and
    /// complementarity violations.
    pub kkt_residual: f64,
}

/// Minimizes `x'Hx/2 + g'x` subject to `A x <= b`, starting from the feasible
/// point `x0`.
pub fn solve_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: DVector<f64>,
    options: QpOptions,
) -> Result<QpSolution> {
    let n = h.nrows();
    let rows = a.nrows();
    if h.ncols() != n || g.len() != n || x0.len() != n || a.ncols() != n || b.len() != rows {
        return Err(LatticeError::DimensionMismatch { expected: n, found: a.ncols() });
    }
    let tol = options.tolerance;
    let infeasible = (a * &x0 - b).max();
    if rows > 0 && infeasible > tol.max(1e-9) {
        return Err(LatticeError::Solver(format!(
            "starting point violates a constraint by {infeasible:e}"
        )));
    }
    let grad_scale = 1.0 + g.amax() + h.amax();

    let mut x = x0;
    let mut working: Vec<usize> = (0..rows)
        .filter(|&i| (b[i] - a.row(i).dot(&x.transpose())).abs() <= tol)
        .collect();
    prune_dependent(a, &mut working);

    for iteration in 0..options.max_iterations {
        let grad = h * &x + g;
        let z = null_space(a, &working, n);
        let gz = z.transpose() * &grad;
        let step = if z.ncols() == 0 || gz.amax() <= tol * grad_scale {
            None
        } else {
            Some(descent_step(h, &z, &gz, tol * grad_scale))
        };

        match step {
            None => {
                let lambda = working_multipliers(a, &working, &grad);
                let (pos, value) = lambda
                    .iter()
                    .enumerate()
                    .fold((usize::MAX, 0.0), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
                if pos == usize::MAX || value >= -tol * grad_scale {
                    let mut multipliers = DVector::zeros(rows);
                    for (k, &i) in working.iter().enumerate() {
                        multipliers[i] = lambda[k];
                    }
                    return Ok(finish(h, g, a, b, x, multipliers, iteration + 1));
                }
                working.remove(pos);
            }
            Some((p, is_ray)) => {
                let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
                let mut blocking = None;
                for i in 0..rows {
                    if working.contains(&i) {
                        continue;
                    }
                    let ap = a.row(i).dot(&p.transpose());
                    if ap > tol * (1.0 + p.amax()) {
                        let room = (b[i] - a.row(i).dot(&x.transpose())).max(0.0);
                        let t = room / ap;
                        if t < alpha {
                            alpha = t;
                            blocking = Some(i);
                        }
                    }
                }
                if !alpha.is_finite() {
                    return Err(LatticeError::Solver("objective unbounded below".into()));
                }
                x += alpha * p;
                if let Some(i) = blocking {
                    working.push(i);
                }
            }
        }
    }
    Err(LatticeError::Solver(format!(
        "active-set iteration limit {} reached",
        options.max_iterations
    )))
}

fn working_matrix(a: &DMatrix<f64>, working: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(working.len(), a.ncols(), |r, c| a[(working[r], c)])
}

/// Drops rows of the working set that are linearly dependent on earlier ones.
fn prune_dependent(a: &DMatrix<f64>, working: &mut Vec<usize>) {
    let mut kept: Vec<usize> = Vec::new();
    for &i in working.iter() {
        let mut trial = kept.clone();
        trial.push(i);
        let m = working_matrix(a, &trial);
        let gram = &m * m.transpose();
        let eig = SymmetricEigen::new(gram);
        let max = eig.eigenvalues.amax().max(1.0);
        if eig.eigenvalues.min() > 1e-10 * max {
            kept = trial;
        }
    }
    *working = kept;
}

/// Orthonormal basis of `{p : A_W p = 0}`.
fn null_space(a: &DMatrix<f64>, working: &[usize], n: usize) -> DMatrix<f64> {
    if working.is_empty() {
        return DMatrix::identity(n, n);
    }
    let aw = working_matrix(a, working);
    let gram = &aw * aw.transpose();
    let Some(gram_inv) = gram.try_inverse() else {
        return DMatrix::zeros(n, 0);
    };
    let projector = DMatrix::identity(n, n) - aw.transpose() * gram_inv * &aw;
    let projector = (&projector + projector.transpose()) * 0.5;
    let eig = SymmetricEigen::new(projector);
    let cols: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    DMatrix::from_fn(n, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

/// Returns a step in the full space and whether it is an unbounded ray
/// (zero-curvature descent) rather than a Newton step.
fn descent_step(
    h: &DMatrix<f64>,
    z: &DMatrix<f64>,
    gz: &DVector<f64>,
    grad_tol: f64,
) -> (DVector<f64>, bool) {
    let hr = z.transpose() * h * z;
    let hr = (&hr + hr.transpose()) * 0.5;
    let eig = SymmetricEigen::new(hr);
    let curvature_floor = 1e-12 * eig.eigenvalues.amax().max(1.0);
    let k = gz.len();
    let mut newton = DVector::zeros(k);
    let mut flat = DVector::zeros(k);
    for j in 0..k {
        let q = eig.eigenvectors.column(j);
        let coef = q.dot(gz);
        if eig.eigenvalues[j] > curvature_floor {
            newton -= q * (coef / eig.eigenvalues[j]);
        } else {
            flat -= q * coef;
        }
    }
    if flat.amax() > grad_tol {
        (z * flat, true)
    } else {
        (z * newton, false)
    }
}

/// Least-squares multipliers solving `A_W' lambda = -grad`.
fn working_multipliers(a: &DMatrix<f64>, working: &[usize], grad: &DVector<f64>) -> DVector<f64> {
    if working.is_empty() {
        return DVector::zeros(0);
    }
    let aw = working_matrix(a, working);
    let gram = &aw * aw.transpose();
    match gram.try_inverse() {
        Some(inv) => -(inv * (&aw * grad)),
        None => DVector::zeros(working.len()),
    }
}

fn finish(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: DVector<f64>,
    multipliers: DVector<f64>,
    iterations: usize,
) -> QpSolution {
    let kkt_residual = kkt_residual(h, g, a, b, &x, &multipliers);
    let objective = 0.5 * x.dot(&(h * &x)) + g.dot(&x);
    QpSolution { x, multipliers, objective, iterations, kkt_residual }
}

/// KKT violation of a primal-dual pair for `min x'Hx/2 + g'x, Ax <= b`.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    multipliers: &DVector<f64>,
) -> f64 {
    let stationarity = (h * x + g + a.transpose() * multipliers).amax();
    let slack = b - a * x;
    let primal = slack.iter().map(|&s| (-s).max(0.0)).fold(0.0, f64::max);
    let dual = multipliers.iter().map(|&l| (-l).max(0.0)).fold(0.0, f64::max);
    let complementarity =
        slack.iter().zip(multipliers.iter()).map(|(s, l)| (s * l).abs()).fold(0.0, f64::max);
    stationarity.max(primal).max(dual).max(complementarity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interior_minimum_is_unconstrained_solution() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(vec![-1.0, -0.5]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![10.0]);
        let sol = solve_qp(&h, &g, &a, &b, DVector::zeros(2), QpOptions::default()).unwrap();
        let expected = h.clone().try_inverse().unwrap() * -&g;
        assert_relative_eq!(sol.x, expected, epsilon = 1e-12);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn box_constrained_projection() {
        // min |x - (2, -3)|^2 over the unit box
        let h = DMatrix::identity(2, 2) * 2.0;
        let g = DVector::from_vec(vec![-4.0, 6.0]);
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_element(4, 1.0);
        let sol = solve_qp(&h, &g, &a, &b, DVector::zeros(2), QpOptions::default()).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![1.0, -1.0]), epsilon = 1e-12);
        assert_relative_eq!(sol.multipliers[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(sol.multipliers[3], 4.0, epsilon = 1e-10);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn linear_objective_follows_ray() {
        // min -x - y over the triangle x, y >= 0, x + 2y <= 2: optimum (2, 0)
        let h = DMatrix::zeros(2, 2);
        let g = DVector::from_vec(vec![-1.0, -1.0]);
        let a = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![0.0, 0.0, 2.0]);
        let x0 = DVector::from_vec(vec![0.1, 0.1]);
        let sol = solve_qp(&h, &g, &a, &b, x0, QpOptions::default()).unwrap();
        assert_relative_eq!(sol.x, DVector::from_vec(vec![2.0, 0.0]), epsilon = 1e-12);
        assert!(sol.kkt_residual < 1e-10);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let h = DMatrix::identity(1, 1);
        let g = DVector::zeros(1);
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DVector::from_vec(vec![0.0]);
        let err = solve_qp(&h, &g, &a, &b, DVector::from_vec(vec![1.0]), QpOptions::default());
        assert!(matches!(err, Err(LatticeError::Solver(_))));
    }
}
