//! The generalized lattice market.
//!
//! Asset `i` returns `u_i` with conditional probability
//!
//! ```text
//! P(X_i(k) = u_i | past) = Phi[i][0] + sum_j Phi[i][j] * X_i(k-j) + sum_l Gamma[i][l] * X_l(k-1)
//! ```
//!
//! and `d_i` otherwise. Within a stage the assets are drawn independently
//! given the common history.
//!
//! Histories are stored as `n x m` matrices whose column `j - 1` holds the
//! return realized `j` stages ago.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::rng::path_rng;
use crate::PROBABILITY_TOLERANCE;

/// Default cap on the number of enumerated paths.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// Full parameterization of a lattice market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeMarketSpec {
    /// Number of assets.
    pub n: usize,
    /// Memory length.
    pub m: usize,
    pub up_factors: Vec<f64>,
    pub down_factors: Vec<f64>,
    /// `n x (m + 1)`; column 0 is the intercept.
    pub markov_coeffs: Vec<Vec<f64>>,
    /// `n x n` with zero diagonal.
    pub asset_correlation: Vec<Vec<f64>>,
    /// `n x m`; entry `[i][j - 1]` is the return of asset `i` at stage `-j`.
    pub initial_history: Vec<Vec<f64>>,
}

/// One realized path: `returns[stage][asset]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPath {
    pub returns: Vec<Vec<f64>>,
}

impl ReturnPath {
    pub fn horizon(&self) -> usize {
        self.returns.len()
    }

    /// Asset count, or `None` for an empty path.
    pub fn assets(&self) -> Option<usize> {
        self.returns.first().map(Vec::len)
    }
}

/// Marginal up-probabilities `probs[stage][asset] = P(X_i(stage) = u_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySchedule {
    pub horizon: usize,
    pub probs: Vec<Vec<f64>>,
}

impl ProbabilitySchedule {
    /// Marginal up-probabilities of one asset over the horizon.
    pub fn asset(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.probs.iter().map(move |row| row[i])
    }
}

fn check_probability(asset: usize, value: f64) -> Result<f64> {
    if !value.is_finite() || value < -PROBABILITY_TOLERANCE || value > 1.0 + PROBABILITY_TOLERANCE {
        return Err(LatticeError::Infeasible { asset, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

impl LatticeMarketSpec {
    /// Builds a spec and checks both its structure and the probability
    /// polyhedron condition.
    pub fn new(
        up_factors: Vec<f64>,
        down_factors: Vec<f64>,
        markov_coeffs: Vec<Vec<f64>>,
        asset_correlation: Vec<Vec<f64>>,
        initial_history: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = up_factors.len();
        let m = markov_coeffs.first().map_or(0, |row| row.len().saturating_sub(1));
        let spec = Self {
            n,
            m,
            up_factors,
            down_factors,
            markov_coeffs,
            asset_correlation,
            initial_history,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Independent assets with constant up-probabilities `p[i]` and memory 1.
    pub fn constant_probability(up: Vec<f64>, down: Vec<f64>, p: &[f64]) -> Result<Self> {
        let n = up.len();
        let markov = p.iter().map(|&pi| vec![pi, 0.0]).collect();
        let history = up.iter().map(|&u| vec![u]).collect();
        Self::new(up, down, markov, vec![vec![0.0; n]; n], history)
    }

    /// Shape, range and history checks; does not look at the polyhedron.
    pub fn validate_structure(&self) -> Result<()> {
        let n = self.n;
        let m = self.m;
        if n == 0 || m == 0 {
            return Err(LatticeError::InvalidParameter(format!(
                "asset count and memory length must be positive (n = {n}, m = {m})"
            )));
        }
        let dims = [
            self.up_factors.len(),
            self.down_factors.len(),
            self.markov_coeffs.len(),
            self.asset_correlation.len(),
            self.initial_history.len(),
        ];
        for found in dims {
            if found != n {
                return Err(LatticeError::DimensionMismatch { expected: n, found });
            }
        }
        for i in 0..n {
            let (u, d) = (self.up_factors[i], self.down_factors[i]);
            if !(-1.0 < d && d < 0.0 && 0.0 < u && u < 1.0) {
                return Err(LatticeError::InvalidParameter(format!(
                    "asset {i}: movement factors must satisfy -1 < d < 0 < u < 1 (u = {u}, d = {d})"
                )));
            }
            if self.markov_coeffs[i].len() != m + 1 {
                return Err(LatticeError::DimensionMismatch {
                    expected: m + 1,
                    found: self.markov_coeffs[i].len(),
                });
            }
            if self.asset_correlation[i].len() != n {
                return Err(LatticeError::DimensionMismatch {
                    expected: n,
                    found: self.asset_correlation[i].len(),
                });
            }
            if self.initial_history[i].len() != m {
                return Err(LatticeError::DimensionMismatch {
                    expected: m,
                    found: self.initial_history[i].len(),
                });
            }
            if self.asset_correlation[i][i] != 0.0 {
                return Err(LatticeError::InvalidParameter(format!(
                    "asset correlation diagonal must be zero (row {i} has {})",
                    self.asset_correlation[i][i]
                )));
            }
            let finite = self.markov_coeffs[i].iter().chain(&self.asset_correlation[i]).all(|v| v.is_finite());
            if !finite {
                return Err(LatticeError::InvalidParameter(format!("asset {i}: non-finite coefficient")));
            }
            if let Some(x) = self.initial_history[i].iter().find(|&&x| x != u && x != d) {
                return Err(LatticeError::InvalidParameter(format!(
                    "asset {i}: initial history entry {x} is neither u = {u} nor d = {d}"
                )));
            }
        }
        Ok(())
    }

    /// Structural checks plus the probability polyhedron condition for every asset.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        let report = crate::estimation::feasibility_check(self);
        for (asset, &slack) in report.slack.iter().enumerate() {
            if slack < -PROBABILITY_TOLERANCE {
                return Err(LatticeError::Infeasible { asset, value: 0.5 - slack });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn raw_up_probability(&self, i: usize, history: &[Vec<f64>]) -> f64 {
        let phi = &self.markov_coeffs[i];
        let own: f64 = phi[1..].iter().zip(&history[i]).map(|(c, x)| c * x).sum();
        let cross: f64 = self.asset_correlation[i].iter().zip(history).map(|(g, h)| g * h[0]).sum();
        phi[0] + own + cross
    }

    /// Conditional up-probabilities of all assets given an `n x m` history.
    pub fn conditional_up_probabilities(&self, history: &[Vec<f64>]) -> Result<Vec<f64>> {
        if history.len() != self.n {
            return Err(LatticeError::DimensionMismatch { expected: self.n, found: history.len() });
        }
        for (i, row) in history.iter().enumerate() {
            if row.len() != self.m {
                return Err(LatticeError::DimensionMismatch { expected: self.m, found: row.len() });
            }
            let (u, d) = (self.up_factors[i], self.down_factors[i]);
            if let Some(x) = row.iter().find(|&&x| x != u && x != d) {
                return Err(LatticeError::InvalidParameter(format!(
                    "asset {i}: history entry {x} is not a lattice value"
                )));
            }
        }
        (0..self.n).map(|i| check_probability(i, self.raw_up_probability(i, history))).collect()
    }

    /// Marginal up-probabilities `p_i(0..horizon)` from the expectation
    /// recursion, seeded with the 0/1 indicators of the initial history.
    pub fn marginal_probability_schedule(&self, horizon: usize) -> Result<ProbabilitySchedule> {
        if horizon == 0 {
            return Err(LatticeError::InvalidParameter("horizon must be at least 1".into()));
        }
        let n = self.n;
        // Expected returns E[X_i(k - j)] in history layout.
        let mut expected: Vec<Vec<f64>> = self.initial_history.clone();
        let mut probs = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut row = Vec::with_capacity(n);
            for i in 0..n {
                row.push(check_probability(i, self.raw_up_probability(i, &expected))?);
            }
            for i in 0..n {
                let (u, d) = (self.up_factors[i], self.down_factors[i]);
                expected[i].rotate_right(1);
                expected[i][0] = (u - d) * row[i] + d;
            }
            probs.push(row);
        }
        Ok(ProbabilitySchedule { horizon, probs })
    }

    /// Samples one path: stage-major, asset-minor draws from a ChaCha8 stream.
    pub fn sample_return_path(&self, horizon: usize, seed: u64) -> Result<ReturnPath> {
        let mut rng = path_rng(seed);
        self.sample_with(horizon, &mut rng)
    }

    /// Samples one path from a caller-owned generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, horizon: usize, rng: &mut R) -> Result<ReturnPath> {
        let n = self.n;
        let mut history = self.initial_history.clone();
        let mut returns = Vec::with_capacity(horizon);
        let mut probs = vec![0.0; n];
        for _ in 0..horizon {
            for (i, p) in probs.iter_mut().enumerate() {
                *p = check_probability(i, self.raw_up_probability(i, &history))?;
            }
            let row: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let draw: f64 = rng.random();
                    if draw < p {
                        self.up_factors[i]
                    } else {
                        self.down_factors[i]
                    }
                })
                .collect();
            for (h, &x) in history.iter_mut().zip(&row) {
                h.rotate_right(1);
                h[0] = x;
            }
            returns.push(row);
        }
        Ok(ReturnPath { returns })
    }

    /// All `2^(n k)` paths with their exact probabilities.
    pub fn enumerate_paths(&self, horizon: usize) -> Result<Vec<(ReturnPath, f64)>> {
        self.enumerate_paths_capped(horizon, DEFAULT_ENUMERATION_CAP)
    }

    pub fn enumerate_paths_capped(&self, horizon: usize, cap: u128) -> Result<Vec<(ReturnPath, f64)>> {
        let bits = (self.n as u128) * (horizon as u128);
        let paths = if bits >= 127 { u128::MAX } else { 1u128 << bits };
        if paths > cap {
            return Err(LatticeError::EnumerationTooLarge { paths, cap });
        }
        let mut out = Vec::with_capacity(paths as usize);
        let mut rows = Vec::with_capacity(horizon);
        self.enumerate_from(horizon, &self.initial_history, &mut rows, 1.0, &mut out)?;
        Ok(out)
    }

    fn enumerate_from(
        &self,
        remaining: usize,
        history: &[Vec<f64>],
        rows: &mut Vec<Vec<f64>>,
        prob: f64,
        out: &mut Vec<(ReturnPath, f64)>,
    ) -> Result<()> {
        if remaining == 0 {
            out.push((ReturnPath { returns: rows.clone() }, prob));
            return Ok(());
        }
        let n = self.n;
        let p: Vec<f64> = (0..n)
            .map(|i| check_probability(i, self.raw_up_probability(i, history)))
            .collect::<Result<_>>()?;
        for mask in 0u64..(1u64 << n) {
            let mut row = Vec::with_capacity(n);
            let mut q = prob;
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    row.push(self.up_factors[i]);
                    q *= p[i];
                } else {
                    row.push(self.down_factors[i]);
                    q *= 1.0 - p[i];
                }
            }
            let next: Vec<Vec<f64>> = history
                .iter()
                .zip(&row)
                .map(|(h, &x)| {
                    let mut h = h.clone();
                    h.rotate_right(1);
                    h[0] = x;
                    h
                })
                .collect();
            rows.push(row);
            self.enumerate_from(remaining - 1, &next, rows, q, out)?;
            rows.pop();
        }
        Ok(())
    }

    /// Draws a random spec that satisfies the polyhedron condition with room
    /// to spare. Intended for fuzzing and benchmarks.
    pub fn random_feasible<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Self {
        let up: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.6)).collect();
        let down: Vec<f64> = (0..n).map(|_| -rng.random_range(0.02..0.6)).collect();
        let mut gamma: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
        let mut markov = Vec::with_capacity(n);
        for i in 0..n {
            let mut phi: Vec<f64> = (0..=m).map(|_| rng.random_range(-1.0..1.0)).collect();
            for (l, g) in gamma[i].iter_mut().enumerate() {
                if l != i {
                    *g = rng.random_range(-1.0..1.0);
                }
            }
            let half_spread = |l: usize| (up[l] - down[l]) / 2.0;
            let used = half_spread(i) * phi[1..].iter().map(|c| c.abs()).sum::<f64>()
                + (0..n).map(|l| half_spread(l) * gamma[i][l].abs()).sum::<f64>();
            let budget = rng.random_range(0.05..0.45);
            let scale = if used > budget { budget / used } else { 1.0 };
            phi[1..].iter_mut().for_each(|c| *c *= scale);
            gamma[i].iter_mut().for_each(|g| *g *= scale);
            let used = used * scale;
            let room = 0.9 * (0.5 - used);
            let offset = rng.random_range(-room..=room);
            let mid = |l: usize| (up[l] + down[l]) / 2.0;
            phi[0] = 0.5 + offset
                - mid(i) * phi[1..].iter().sum::<f64>()
                - (0..n).map(|l| mid(l) * gamma[i][l]).sum::<f64>();
            markov.push(phi);
        }
        let history = (0..n)
            .map(|i| (0..m).map(|_| if rng.random_bool(0.5) { up[i] } else { down[i] }).collect())
            .collect();
        Self {
            n,
            m,
            up_factors: up,
            down_factors: down,
            markov_coeffs: markov,
            asset_correlation: gamma,
            initial_history: history,
        }
    }
}

/// Price paths `S(j + 1) = S(j) * (1 + X(j))`; row 0 holds the initial prices.
pub fn simulate_prices(path: &ReturnPath, initial_prices: &[f64]) -> Result<Vec<Vec<f64>>> {
    if let Some((i, &p)) = initial_prices.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p.is_finite())) {
        return Err(LatticeError::InvalidParameter(format!("initial price of asset {i} must be positive, got {p}")));
    }
    if let Some(n) = path.assets() {
        if n != initial_prices.len() {
            return Err(LatticeError::DimensionMismatch { expected: initial_prices.len(), found: n });
        }
    }
    let mut prices = Vec::with_capacity(path.horizon() + 1);
    prices.push(initial_prices.to_vec());
    for row in &path.returns {
        let last = prices.last().expect("nonempty");
        let next = last.iter().zip(row).map(|(s, x)| s * (1.0 + x)).collect();
        prices.push(next);
    }
    Ok(prices)
}
