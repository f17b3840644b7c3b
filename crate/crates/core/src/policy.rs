//! Multi-double linear policies.
//!
//! Capital `V0` is split across assets by the allocation `v`, then per asset
//! into a long sub-account (`alpha`) and a short sub-account (`1 - alpha`).
//! Each period the long side invests `w_i V_L` and the short side `-w_i V_S`;
//! uninvested long capital earns the risk-free rate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::lattice::ReturnPath;

/// The policy triple `(alpha, w, v)` plus capital, risk-free rate and cost rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTriple {
    pub alpha: f64,
    pub weights: Vec<f64>,
    pub allocation: Vec<f64>,
    pub initial_capital: f64,
    /// Per-period risk-free rate.
    pub risk_free_rate: f64,
    /// Cost per unit of traded notional.
    #[serde(default)]
    pub cost_rate: f64,
}

impl PolicyTriple {
    /// Equal weight `omega` on every asset and equal allocation, no rate, no cost.
    pub fn uniform(n: usize, alpha: f64, omega: f64, initial_capital: f64) -> Self {
        Self {
            alpha,
            weights: vec![omega; n],
            allocation: vec![1.0 / n as f64; n],
            initial_capital,
            risk_free_rate: 0.0,
            cost_rate: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.alpha) {
            return Err(LatticeError::InvalidParameter(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if self.allocation.len() != self.weights.len() {
            return Err(LatticeError::DimensionMismatch {
                expected: self.weights.len(),
                found: self.allocation.len(),
            });
        }
        if let Some(w) = self.weights.iter().find(|&&w| !unit(w)) {
            return Err(LatticeError::InvalidParameter(format!("weight {w} outside [0, 1]")));
        }
        if let Some(v) = self.allocation.iter().find(|&&v| !unit(v)) {
            return Err(LatticeError::InvalidParameter(format!("allocation {v} outside [0, 1]")));
        }
        let total: f64 = self.allocation.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LatticeError::InvalidParameter(format!("allocation sums to {total}, not 1")));
        }
        if !(self.initial_capital > 0.0 && self.initial_capital.is_finite()) {
            return Err(LatticeError::InvalidParameter(format!(
                "initial capital must be positive, got {}",
                self.initial_capital
            )));
        }
        if !(self.risk_free_rate >= 0.0 && self.risk_free_rate.is_finite()) {
            return Err(LatticeError::InvalidParameter(format!(
                "risk-free rate must be nonnegative, got {}",
                self.risk_free_rate
            )));
        }
        if !(self.cost_rate >= 0.0 && self.cost_rate.is_finite()) {
            return Err(LatticeError::InvalidParameter(format!(
                "cost rate must be nonnegative, got {}",
                self.cost_rate
            )));
        }
        Ok(())
    }

    /// Initial capital of asset `i`, `v_i V0`.
    pub fn asset_capital(&self, i: usize) -> f64 {
        self.allocation[i] * self.initial_capital
    }
}

/// Per-stage account state of a policy run. All vectors are indexed by stage
/// `0..=k`; `long[j][i]` and `short[j][i]` are the sub-account values of
/// asset `i` after stage `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountTrajectory {
    pub initial_capital: f64,
    pub long: Vec<Vec<f64>>,
    pub short: Vec<Vec<f64>>,
    /// `V(j)`, the sum of all sub-accounts (costs already deducted).
    pub total: Vec<f64>,
    /// `G(j) = V(j) - V0`.
    pub gain_loss: Vec<f64>,
    /// Transaction costs paid through stage `j`.
    pub cumulative_cost: Vec<f64>,
}

impl AccountTrajectory {
    pub fn horizon(&self) -> usize {
        self.total.len() - 1
    }

    /// Writes the trajectory as CSV with columns
    /// `stage, V_<i>L..., V_<i>S..., V, G, cum_cost`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.long.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["stage".to_string()];
        header.extend((1..=n).map(|i| format!("V_{i}L")));
        header.extend((1..=n).map(|i| format!("V_{i}S")));
        header.extend(["V", "G", "cum_cost"].map(String::from));
        w.write_record(&header)?;
        for j in 0..self.total.len() {
            let mut rec = vec![j.to_string()];
            rec.extend(self.long[j].iter().map(f64::to_string));
            rec.extend(self.short[j].iter().map(f64::to_string));
            rec.push(self.total[j].to_string());
            rec.push(self.gain_loss[j].to_string());
            rec.push(self.cumulative_cost[j].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the policy over a lattice path.
pub fn run_policy(triple: &PolicyTriple, path: &ReturnPath) -> Result<AccountTrajectory> {
    run_policy_on_returns(triple, &path.returns)
}

/// Runs the policy over arbitrary per-period returns (each `> -1`), one row per stage.
pub fn run_policy_on_returns(triple: &PolicyTriple, returns: &[Vec<f64>]) -> Result<AccountTrajectory> {
    triple.validate()?;
    let n = triple.dim();
    let (alpha, rf, c) = (triple.alpha, triple.risk_free_rate, triple.cost_rate);
    let mut long: Vec<f64> = (0..n).map(|i| alpha * triple.asset_capital(i)).collect();
    let mut short: Vec<f64> = (0..n).map(|i| (1.0 - alpha) * triple.asset_capital(i)).collect();
    let v0 = triple.initial_capital;

    let k = returns.len();
    let mut traj = AccountTrajectory {
        initial_capital: v0,
        long: Vec::with_capacity(k + 1),
        short: Vec::with_capacity(k + 1),
        total: Vec::with_capacity(k + 1),
        gain_loss: Vec::with_capacity(k + 1),
        cumulative_cost: Vec::with_capacity(k + 1),
    };
    let mut paid = 0.0;
    // Gains are accumulated on their own so that G(k) carries no
    // cancellation error from subtracting V0.
    let mut gain = vec![0.0; n];
    let record = |traj: &mut AccountTrajectory, long: &[f64], short: &[f64], gain: &[f64], paid: f64| {
        let total: f64 = long.iter().zip(short).map(|(l, s)| l + s).sum();
        traj.long.push(long.to_vec());
        traj.short.push(short.to_vec());
        traj.total.push(total);
        traj.gain_loss.push(gain.iter().sum());
        traj.cumulative_cost.push(paid);
    };
    record(&mut traj, &long, &short, &gain, paid);

    for (stage, row) in returns.iter().enumerate() {
        if row.len() != n {
            return Err(LatticeError::DimensionMismatch { expected: n, found: row.len() });
        }
        for i in 0..n {
            let x = row[i];
            if !(x > -1.0 && x.is_finite()) {
                return Err(LatticeError::InvalidParameter(format!(
                    "stage {stage}, asset {i}: return {x} must exceed -1"
                )));
            }
            let w = triple.weights[i];
            let invest_long = w * long[i];
            let invest_short = -w * short[i];
            let cost_long = c * invest_long.abs();
            let cost_short = c * invest_short.abs();
            let long_gain = invest_long * x + (long[i] - invest_long) * rf - cost_long;
            let short_gain = invest_short * x - cost_short;
            long[i] += long_gain;
            short[i] += short_gain;
            gain[i] += long_gain + short_gain;
            paid += cost_long + cost_short;
        }
        record(&mut traj, &long, &short, &gain, paid);
    }
    Ok(traj)
}

/// Account value from the product form
/// `V(k) = sum_i v_i V0 (alpha R_i+(k) + (1 - alpha) R_i-(k))`. Cost-free only.
pub fn closed_form_account(triple: &PolicyTriple, path: &ReturnPath) -> Result<Vec<f64>> {
    closed_form_on_returns(triple, &path.returns)
}

pub fn closed_form_on_returns(triple: &PolicyTriple, returns: &[Vec<f64>]) -> Result<Vec<f64>> {
    triple.validate()?;
    if triple.cost_rate != 0.0 {
        return Err(LatticeError::InvalidParameter(
            "the product form has no cost term; cost_rate must be 0".into(),
        ));
    }
    let n = triple.dim();
    let rf = triple.risk_free_rate;
    let mut up = vec![1.0; n];
    let mut down = vec![1.0; n];
    let value = |up: &[f64], down: &[f64]| -> f64 {
        (0..n)
            .map(|i| triple.asset_capital(i) * (triple.alpha * up[i] + (1.0 - triple.alpha) * down[i]))
            .sum()
    };
    let mut out = Vec::with_capacity(returns.len() + 1);
    out.push(value(&up, &down));
    for row in returns {
        if row.len() != n {
            return Err(LatticeError::DimensionMismatch { expected: n, found: row.len() });
        }
        for i in 0..n {
            let w = triple.weights[i];
            up[i] *= (1.0 + rf) + w * (row[i] - rf);
            down[i] *= 1.0 - w * row[i];
        }
        out.push(value(&up, &down));
    }
    Ok(out)
}

/// `G(j) = V(j) - V0`.
pub fn gain_loss_series(traj: &AccountTrajectory) -> Vec<f64> {
    traj.total.iter().map(|v| v - traj.initial_capital).collect()
}

/// Largest peak-to-trough decline as a fraction of the running peak. The
/// first value must be positive; later values may drop to or below zero, in
/// which case the drawdown reaches or exceeds 1.
pub fn max_drawdown(series: &[f64]) -> Result<f64> {
    let Some(&first) = series.first() else {
        return Err(LatticeError::InvalidParameter("max drawdown of an empty series".into()));
    };
    if !(first > 0.0) {
        return Err(LatticeError::InvalidParameter(format!(
            "max drawdown needs a positive starting value, got {first}"
        )));
    }
    if let Some(v) = series.iter().find(|v| !v.is_finite()) {
        return Err(LatticeError::InvalidParameter(format!("max drawdown of non-finite value {v}")));
    }
    let mut peak = series[0];
    let mut worst = 0.0f64;
    for &v in series {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    Ok(worst)
}
