use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::lattice::LatticeMarketSpec;
use crate::PROBABILITY_TOLERANCE;

/// The convex polyhedron of admissible Markov coefficients for one asset:
///
/// ```text
/// |phi_0 + offset + lag_mid * sum_j phi_j| + lag_half_spread * sum_j |phi_j| <= budget
/// ```
///
/// where the asset-correlation row enters only through `offset` and
/// `budget = 1/2 - correlation_spread`. Membership is equivalent to every
/// conditional up-probability lying in [0, 1] at every lattice history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedronConstraint {
    pub asset: usize,
    pub memory: usize,
    /// `-1/2 + sum_l (u_l + d_l)/2 * Gamma[i][l]`.
    pub offset: f64,
    /// `(u_i + d_i) / 2`.
    pub lag_mid: f64,
    /// `(u_i - d_i) / 2`.
    pub lag_half_spread: f64,
    /// `sum_l (u_l - d_l)/2 * |Gamma[i][l]|`.
    pub correlation_spread: f64,
}

impl PolyhedronConstraint {
    pub fn budget(&self) -> f64 {
        0.5 - self.correlation_spread
    }

    fn center_term(&self, phi: &[f64]) -> f64 {
        phi[0] + self.offset + self.lag_mid * phi[1..].iter().sum::<f64>()
    }

    /// Left-hand side including the correlation spread, to be compared with 1/2.
    pub fn lhs(&self, phi: &[f64]) -> f64 {
        self.center_term(phi).abs()
            + self.lag_half_spread * phi[1..].iter().map(|c| c.abs()).sum::<f64>()
            + self.correlation_spread
    }

    pub fn slack(&self, phi: &[f64]) -> f64 {
        0.5 - self.lhs(phi)
    }

    /// The coefficient vector at the middle of the polyhedron: all lag
    /// coefficients zero and the probability exactly 1/2.
    pub fn center(&self) -> Vec<f64> {
        let mut phi = vec![0.0; self.memory + 1];
        phi[0] = -self.offset;
        phi
    }

    /// Number of variables of the lifted system: `phi` (m + 1), lag bounds
    /// `t_j` (m) and the center bound `s`.
    pub fn lifted_dim(&self) -> usize {
        2 * self.memory + 2
    }

    /// Lifted linear system `A x <= b` over `x = (phi_0..phi_m, t_1..t_m, s)`:
    ///
    /// ```text
    ///  phi_j - t_j <= 0,  -phi_j - t_j <= 0          (j = 1..m)
    ///  c(phi) - s <= 0,   -c(phi) - s <= 0           (c = center term)
    ///  s + lag_half_spread * sum_j t_j <= budget
    /// ```
    ///
    /// whose projection onto `phi` is the polyhedron.
    pub fn lifted_system(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let m = self.memory;
        let dim = self.lifted_dim();
        let s = dim - 1;
        let mut a = Vec::with_capacity(2 * m + 3);
        let mut b = Vec::with_capacity(2 * m + 3);
        for j in 1..=m {
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; dim];
                row[j] = sign;
                row[m + j] = -1.0;
                a.push(row);
                b.push(0.0);
            }
        }
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; dim];
            row[0] = sign;
            for c in &mut row[1..=m] {
                *c = sign * self.lag_mid;
            }
            row[s] = -1.0;
            a.push(row);
            b.push(-sign * self.offset);
        }
        let mut row = vec![0.0; dim];
        for c in &mut row[m + 1..s] {
            *c = self.lag_half_spread;
        }
        row[s] = 1.0;
        a.push(row);
        b.push(self.budget());
        (a, b)
    }

    /// Lifts `phi` to the tightest point `(phi, |phi_j|, |c(phi)|)` of the lifted system.
    pub fn lift(&self, phi: &[f64]) -> Vec<f64> {
        let mut x = phi.to_vec();
        x.extend(phi[1..].iter().map(|c| c.abs()));
        x.push(self.center_term(phi).abs());
        x
    }
}

/// Builds the admissible-coefficient polyhedron of asset `asset` given the
/// movement factors of all assets and the correlation matrix.
pub fn build_constraints(
    up: &[f64],
    down: &[f64],
    gamma: &[Vec<f64>],
    asset: usize,
    memory: usize,
) -> Result<PolyhedronConstraint> {
    let n = up.len();
    if down.len() != n || gamma.len() != n {
        return Err(LatticeError::DimensionMismatch { expected: n, found: down.len().min(gamma.len()) });
    }
    if asset >= n || memory == 0 {
        return Err(LatticeError::InvalidParameter(format!(
            "asset {asset} of {n} with memory {memory}"
        )));
    }
    let row = &gamma[asset];
    if row.len() != n {
        return Err(LatticeError::DimensionMismatch { expected: n, found: row.len() });
    }
    if row[asset] != 0.0 {
        return Err(LatticeError::InvalidParameter("correlation diagonal must be zero".into()));
    }
    for l in 0..n {
        if !(-1.0 < down[l] && down[l] < 0.0 && 0.0 < up[l] && up[l] < 1.0) {
            return Err(LatticeError::InvalidParameter(format!(
                "asset {l}: movement factors must satisfy -1 < d < 0 < u < 1"
            )));
        }
    }
    let offset = -0.5 + (0..n).map(|l| (up[l] + down[l]) / 2.0 * row[l]).sum::<f64>();
    let correlation_spread = (0..n).map(|l| (up[l] - down[l]) / 2.0 * row[l].abs()).sum::<f64>();
    if correlation_spread > 0.5 + PROBABILITY_TOLERANCE {
        return Err(LatticeError::EmptyConstraintSet { asset, used: correlation_spread });
    }
    Ok(PolyhedronConstraint {
        asset,
        memory,
        offset,
        lag_mid: (up[asset] + down[asset]) / 2.0,
        lag_half_spread: (up[asset] - down[asset]) / 2.0,
        correlation_spread,
    })
}

/// Per-asset slack `1/2 - LHS` of the polyhedron condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub slack: Vec<f64>,
}

/// Evaluates the polyhedron condition for every asset of a spec.
pub fn feasibility_check(spec: &LatticeMarketSpec) -> FeasibilityReport {
    let n = spec.n;
    let slack: Vec<f64> = (0..n)
        .map(|i| {
            let row = &spec.asset_correlation[i];
            let phi = &spec.markov_coeffs[i];
            let half = |l: usize| (spec.up_factors[l] - spec.down_factors[l]) / 2.0;
            let mid = |l: usize| (spec.up_factors[l] + spec.down_factors[l]) / 2.0;
            let center = phi[0] - 0.5
                + mid(i) * phi[1..].iter().sum::<f64>()
                + (0..n).map(|l| mid(l) * row[l]).sum::<f64>();
            let lhs = center.abs()
                + half(i) * phi[1..].iter().map(|c| c.abs()).sum::<f64>()
                + (0..n).map(|l| half(l) * row[l].abs()).sum::<f64>();
            0.5 - lhs
        })
        .collect();
    let feasible = slack.iter().all(|&s| s >= -PROBABILITY_TOLERANCE);
    FeasibilityReport { feasible, slack }
}
