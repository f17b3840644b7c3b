//! Closed-form lower bounds on the expected gain-loss of multi-double linear
//! policies and the positive-expectation certificates derived from them.
//!
//! Every power `x^e` with a possibly large exponent is evaluated as
//! `exp(e ln x)`. Certificates are sufficient conditions only: a certificate
//! that fails says nothing about the sign of the expected gain-loss, and one
//! whose hypotheses are unmet is reported as not applicable.

mod certificates;
pub mod roots;

use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::lattice::{LatticeMarketSpec, ProbabilitySchedule};
use crate::policy::PolicyTriple;

pub use certificates::{
    special_case_positivity, symmetric_lower_bound, symmetric_rpe_certificate, trend_rpe_certificate,
    AssetCertificate, Certificate, CertificateStatus,
};
pub use roots::{epsilon_star, phi_aux, phi_inverse, theta_aux, theta_aux_derivative, theta_aux_inverse};

/// Expected number of up-moves `E[H_i(k)] = p_i(0) + .. + p_i(k - 1)`.
pub fn expected_positive_count(schedule: &ProbabilitySchedule, asset: usize, k: usize) -> Result<f64> {
    if k > schedule.horizon {
        return Err(LatticeError::InvalidParameter(format!(
            "horizon {k} exceeds schedule length {}",
            schedule.horizon
        )));
    }
    if schedule.probs.first().is_some_and(|row| asset >= row.len()) {
        return Err(LatticeError::InvalidParameter(format!("asset {asset} out of range")));
    }
    let sum: f64 = schedule.asset(asset).take(k).sum();
    Ok(sum.clamp(0.0, k as f64))
}

/// Lower bound of Paley-Zygmund type on `P(V > theta E[V])`.
pub fn positivity_probability_bound(mean: f64, variance: f64, theta_threshold: f64) -> Result<f64> {
    if !(mean > 0.0) || !(variance >= 0.0) || !(0.0..=1.0).contains(&theta_threshold) {
        return Err(LatticeError::InvalidParameter(format!(
            "need mean > 0, variance >= 0 and theta in [0, 1], got {mean}, {variance}, {theta_threshold}"
        )));
    }
    let head = (1.0 - theta_threshold).powi(2) * mean * mean;
    if head == 0.0 {
        return Ok(0.0);
    }
    Ok(head / (variance + head))
}

/// Long-side and short-side growth products of one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetBound {
    pub asset: usize,
    pub expected_up_count: f64,
    pub log_beta: f64,
    pub log_gamma: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `V_i0 (alpha (beta - 1) + (1 - alpha)(gamma - 1))`.
    pub contribution: f64,
}

/// Worst-case expected gain-loss bound together with every certificate
/// evaluated at the same parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub horizon: usize,
    pub alpha: f64,
    pub assets: Vec<AssetBound>,
    /// Strict lower bound on the expected gain-loss `E[G(k)]`.
    pub bound: f64,
    /// Only evaluated for `alpha = 1/2`.
    pub special_case: Option<Certificate>,
    pub trend: Certificate,
    pub symmetric: Certificate,
}

pub(crate) fn check_inputs(triple: &PolicyTriple, spec: &LatticeMarketSpec, k: usize) -> Result<()> {
    triple.validate()?;
    spec.validate_structure()?;
    if triple.dim() != spec.n {
        return Err(LatticeError::DimensionMismatch { expected: spec.n, found: triple.dim() });
    }
    if k < 2 {
        return Err(LatticeError::InvalidParameter(format!("horizon must exceed 1, got {k}")));
    }
    if let Some(w) = triple.weights.iter().find(|&&w| !(w > 0.0 && w < 1.0)) {
        return Err(LatticeError::InvalidParameter(format!("weight {w} outside the open interval (0, 1)")));
    }
    if triple.cost_rate != 0.0 {
        return Err(LatticeError::InvalidParameter(
            "closed-form bounds assume zero transaction costs".into(),
        ));
    }
    Ok(())
}

pub(crate) fn expected_counts(spec: &LatticeMarketSpec, k: usize) -> Result<Vec<f64>> {
    let schedule = spec.marginal_probability_schedule(k)?;
    (0..spec.n).map(|i| expected_positive_count(&schedule, i, k)).collect()
}

pub(crate) fn asset_bounds(triple: &PolicyTriple, spec: &LatticeMarketSpec, k: usize, counts: &[f64]) -> Vec<AssetBound> {
    let r = triple.risk_free_rate;
    let alpha = triple.alpha;
    (0..spec.n)
        .map(|i| {
            let (u, d, w) = (spec.up_factors[i], spec.down_factors[i], triple.weights[i]);
            let e = counts[i];
            let rest = k as f64 - e;
            let log_beta = e * (1.0 + r + w * (u - r)).ln() + rest * (1.0 + r + w * (d - r)).ln();
            let log_gamma = e * (1.0 - w * u).ln() + rest * (1.0 - w * d).ln();
            let (beta, gamma) = (log_beta.exp(), log_gamma.exp());
            // expm1 keeps precision when the products are close to one
            let contribution =
                triple.asset_capital(i) * (alpha * log_beta.exp_m1() + (1.0 - alpha) * log_gamma.exp_m1());
            AssetBound { asset: i, expected_up_count: e, log_beta, log_gamma, beta, gamma, contribution }
        })
        .collect()
}

/// Strict lower bound on `E[G(k)]` for `alpha, w_i in (0, 1)` and `k > 1`,
/// with `E[H_i(k)]` taken from the marginal probability recursion.
pub fn worst_case_gain_loss_bound(triple: &PolicyTriple, spec: &LatticeMarketSpec, k: usize) -> Result<BoundReport> {
    check_inputs(triple, spec, k)?;
    if !(triple.alpha > 0.0 && triple.alpha < 1.0) {
        return Err(LatticeError::InvalidParameter(format!(
            "alpha = {} outside the open interval (0, 1)",
            triple.alpha
        )));
    }
    let counts = expected_counts(spec, k)?;
    let assets = asset_bounds(triple, spec, k, &counts);
    let bound = assets.iter().map(|a| a.contribution).sum();
    let special_case = if triple.alpha == 0.5 {
        Some(certificates::special_case_with_counts(triple, spec, k, &counts))
    } else {
        None
    };
    Ok(BoundReport {
        horizon: k,
        alpha: triple.alpha,
        bound,
        special_case,
        trend: certificates::trend_with_counts(triple, spec, k, &counts, Some(bound)),
        symmetric: certificates::symmetric_with_counts(triple, spec, k, &counts),
        assets,
    })
}
