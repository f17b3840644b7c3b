use serde::{Deserialize, Serialize};

use super::roots::{epsilon_star, phi_aux, phi_inverse, theta_aux, theta_aux_inverse};
use super::{asset_bounds, check_inputs, expected_counts};
use crate::error::{LatticeError, Result};
use crate::lattice::LatticeMarketSpec;
use crate::policy::PolicyTriple;

/// Relative tolerance for deciding `u_i = -d_i` and `E[H_i] in {0, k/2, k}`.
const MATCH_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    /// Hypotheses met and the sufficient inequality holds for every asset.
    Holds,
    /// Hypotheses met but the inequality fails for at least one asset.
    Fails,
    /// Hypotheses unmet; no statement is made.
    NotApplicable,
}

/// Per-asset quantities of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCertificate {
    pub asset: usize,
    pub expected_up_count: f64,
    /// Deviation of `E[H_i(k)]` from `k/2` in the direction the certificate uses.
    pub epsilon: f64,
    /// Lower edge of the admissible `epsilon` range, when there is one.
    pub lower: Option<f64>,
    /// Upper edge of the admissible `epsilon` range, when there is one.
    pub upper: Option<f64>,
    pub epsilon_star: Option<f64>,
    /// Value of the sufficient inequality, positive when it holds.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub status: CertificateStatus,
    pub reason: Option<String>,
    pub assets: Vec<AssetCertificate>,
    /// The worst-case bound at the same parameters, reported when the
    /// certificate holds.
    pub bound_cross_check: Option<f64>,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.status == CertificateStatus::Holds
    }

    /// Smallest per-asset margin, if any asset was evaluated.
    pub fn min_margin(&self) -> Option<f64> {
        self.assets.iter().map(|a| a.margin).reduce(f64::min)
    }

    fn not_applicable(name: &str, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CertificateStatus::NotApplicable,
            reason: Some(reason.into()),
            assets: Vec::new(),
            bound_cross_check: None,
        }
    }

    fn from_assets(name: &str, assets: Vec<AssetCertificate>) -> Self {
        let status = if assets.iter().all(|a| a.holds) { CertificateStatus::Holds } else { CertificateStatus::Fails };
        Self { name: name.into(), status, reason: None, assets, bound_cross_check: None }
    }
}

fn near(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= MATCH_TOLERANCE * scale.max(1.0)
}

/// `alpha = 1/2` positivity when each asset either always moves the same
/// way in expectation (`E[H_i] in {0, k}`) or satisfies
/// `(1+wu)^E (1+wd)^(k-E) + (1-wu)^E (1-wd)^(k-E) > 2`.
pub fn special_case_positivity(spec: &LatticeMarketSpec, triple: &PolicyTriple, k: usize) -> Result<Certificate> {
    check_inputs(triple, spec, k)?;
    if triple.alpha != 0.5 {
        return Err(LatticeError::InvalidParameter(format!(
            "special-case positivity requires alpha = 1/2, got {}",
            triple.alpha
        )));
    }
    let counts = expected_counts(spec, k)?;
    Ok(special_case_with_counts(triple, spec, k, &counts))
}

pub(super) fn special_case_with_counts(
    triple: &PolicyTriple,
    spec: &LatticeMarketSpec,
    k: usize,
    counts: &[f64],
) -> Certificate {
    let kf = k as f64;
    let assets = (0..spec.n)
        .map(|i| {
            let (u, d, w) = (spec.up_factors[i], spec.down_factors[i], triple.weights[i]);
            let e = counts[i];
            let long = e * (w * u).ln_1p() + (kf - e) * (w * d).ln_1p();
            let short = e * (-w * u).ln_1p() + (kf - e) * (-w * d).ln_1p();
            let margin = long.exp() + short.exp() - 2.0;
            let one_sided = near(e, 0.0, kf) || near(e, kf, kf);
            AssetCertificate {
                asset: i,
                expected_up_count: e,
                epsilon: e - kf / 2.0,
                lower: None,
                upper: None,
                epsilon_star: None,
                margin,
                holds: one_sided || margin > 0.0,
            }
        })
        .collect();
    Certificate::from_assets("special_case", assets)
}

/// Positive expectation under a clear trend: either `u_i > -d_i` for every
/// asset with `E[H_i] = k/2 + eps_i`, or `u_i < -d_i` for every asset with
/// `E[H_i] = k/2 - eps_i`, and `eps_i` beyond the root of
/// `B_i^(k/2) theta(eps) = 2` on the increasing branch of `theta`.
///
/// `B_i` is the smaller of the two growth bases, which makes the test
/// conservative.
pub fn trend_rpe_certificate(spec: &LatticeMarketSpec, triple: &PolicyTriple, k: usize) -> Result<Certificate> {
    check_inputs(triple, spec, k)?;
    let counts = expected_counts(spec, k)?;
    let bound = asset_bounds(triple, spec, k, &counts).iter().map(|a| a.contribution).sum();
    Ok(trend_with_counts(triple, spec, k, &counts, Some(bound)))
}

pub(super) fn trend_with_counts(
    triple: &PolicyTriple,
    spec: &LatticeMarketSpec,
    k: usize,
    counts: &[f64],
    bound: Option<f64>,
) -> Certificate {
    const NAME: &str = "trend";
    if triple.alpha != 0.5 {
        return Certificate::not_applicable(NAME, "requires alpha = 1/2");
    }
    let drift: Vec<f64> = (0..spec.n).map(|i| spec.up_factors[i] + spec.down_factors[i]).collect();
    let upward = drift.iter().all(|&x| x > 0.0);
    let downward = drift.iter().all(|&x| x < 0.0);
    if !upward && !downward {
        return Certificate::not_applicable(NAME, "assets do not share a strict trend direction");
    }
    let kf = k as f64;
    let mut assets = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let (u, d, w) = (spec.up_factors[i], spec.down_factors[i], triple.weights[i]);
        let (a, b, log_base, epsilon) = if upward {
            ((1.0 + w * u) / (1.0 + w * d), (1.0 - w * u) / (1.0 - w * d), (-w * u).ln_1p() + (-w * d).ln_1p(), counts[i] - kf / 2.0)
        } else {
            ((1.0 + w * d) / (1.0 + w * u), (1.0 - w * d) / (1.0 - w * u), (w * u).ln_1p() + (w * d).ln_1p(), kf / 2.0 - counts[i])
        };
        let scale = kf / 2.0 * log_base;
        let target = 2.0 * (-scale).exp();
        let Ok(star) = epsilon_star(a, b) else {
            return Certificate::not_applicable(NAME, format!("asset {i}: degenerate auxiliary bases"));
        };
        // When the minimum of theta already clears the target the inequality
        // holds on the whole increasing branch.
        let lower = if theta_aux(a, b, star) >= target {
            star
        } else {
            match theta_aux_inverse(a, b, target) {
                Ok(x) => x,
                Err(e) => return Certificate::not_applicable(NAME, format!("asset {i}: {e}")),
            }
        };
        let margin = if epsilon > 0.0 { (scale + theta_aux(a, b, epsilon).ln()).exp() - 2.0 } else { f64::NEG_INFINITY };
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        assets.push(AssetCertificate {
            asset: i,
            expected_up_count: counts[i],
            epsilon,
            lower: Some(lower),
            upper: None,
            epsilon_star: Some(star),
            margin,
            holds: epsilon > lower,
        });
    }
    let mut cert = Certificate::from_assets(NAME, assets);
    if cert.holds() {
        cert.bound_cross_check = bound;
    }
    cert
}

fn symmetric_hypotheses(triple: &PolicyTriple, spec: &LatticeMarketSpec) -> std::result::Result<(), &'static str> {
    if triple.alpha != 0.5 {
        return Err("requires alpha = 1/2");
    }
    if triple.risk_free_rate != 0.0 {
        return Err("requires a zero risk-free rate");
    }
    let symmetric = (0..spec.n).all(|i| near(spec.up_factors[i], -spec.down_factors[i], 1.0));
    if !symmetric {
        return Err("requires u_i = -d_i for every asset");
    }
    Ok(())
}

/// Positive expectation in a symmetric market: `eps_i = |E[H_i] - k/2|`
/// inside `(phi^-1(2 / (1 - w^2 d^2)^(k/2)), k/2)` for every asset.
pub fn symmetric_rpe_certificate(spec: &LatticeMarketSpec, triple: &PolicyTriple, k: usize) -> Result<Certificate> {
    check_inputs(triple, spec, k)?;
    let counts = expected_counts(spec, k)?;
    Ok(symmetric_with_counts(triple, spec, k, &counts))
}

pub(super) fn symmetric_with_counts(
    triple: &PolicyTriple,
    spec: &LatticeMarketSpec,
    k: usize,
    counts: &[f64],
) -> Certificate {
    const NAME: &str = "symmetric";
    if let Err(reason) = symmetric_hypotheses(triple, spec) {
        return Certificate::not_applicable(NAME, reason);
    }
    let kf = k as f64;
    let assets = (0..spec.n)
        .map(|i| {
            let (d, w) = (spec.down_factors[i], triple.weights[i]);
            let z = (1.0 - w * d) / (1.0 + w * d);
            let log_base = kf / 2.0 * (-(w * d).powi(2)).ln_1p();
            let target = 2.0 * (-log_base).exp();
            let lower = phi_inverse(z, target).unwrap_or(f64::INFINITY);
            let epsilon = (counts[i] - kf / 2.0).abs();
            let margin = (log_base + phi_aux(z, epsilon).ln()).exp() - 2.0;
            AssetCertificate {
                asset: i,
                expected_up_count: counts[i],
                epsilon,
                lower: Some(lower),
                upper: Some(kf / 2.0),
                epsilon_star: None,
                margin,
                holds: epsilon > lower && epsilon < kf / 2.0,
            }
        })
        .collect();
    Certificate::from_assets(NAME, assets)
}

/// Lower bound `sum_i (V_i0 / 2)((1 - w^2 d^2)^(k/2) phi(eps_i) - 2)` on the
/// expected gain-loss in a symmetric market, which reduces to
/// `V_i0 ((1 - w^2 d^2)^(k/2) - 1)` for assets with `E[H_i] = k/2`.
pub fn symmetric_lower_bound(spec: &LatticeMarketSpec, triple: &PolicyTriple, k: usize) -> Result<f64> {
    check_inputs(triple, spec, k)?;
    symmetric_hypotheses(triple, spec).map_err(|r| LatticeError::InvalidParameter(r.into()))?;
    let counts = expected_counts(spec, k)?;
    let kf = k as f64;
    Ok((0..spec.n)
        .map(|i| {
            let (d, w) = (spec.down_factors[i], triple.weights[i]);
            let z = (1.0 - w * d) / (1.0 + w * d);
            let epsilon = (counts[i] - kf / 2.0).abs();
            let log_base = kf / 2.0 * (-(w * d).powi(2)).ln_1p();
            triple.asset_capital(i) / 2.0 * ((log_base + phi_aux(z, epsilon).ln()).exp() - 2.0)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn coin(u: f64, d: f64, p: f64) -> LatticeMarketSpec {
        LatticeMarketSpec::constant_probability(vec![u], vec![d], &[p]).unwrap()
    }

    #[test]
    fn special_case_examples() {
        let half = PolicyTriple::uniform(1, 0.5, 0.5, 1.0);
        let c = special_case_positivity(&coin(0.1, -0.1, 1.0), &half, 2).unwrap();
        assert!(c.holds());
        assert_relative_eq!(c.assets[0].margin, 0.005, epsilon = 1e-12);
        let c = special_case_positivity(&coin(0.1, -0.1, 0.5), &half, 2).unwrap();
        assert_eq!(c.status, CertificateStatus::Fails);
        assert!(c.assets[0].margin <= 0.0);
        let skew = PolicyTriple::uniform(1, 0.3, 0.5, 1.0);
        assert!(special_case_positivity(&coin(0.1, -0.1, 0.5), &skew, 2).is_err());
    }

    #[test]
    fn trend_requires_common_direction() {
        let half = PolicyTriple::uniform(1, 0.5, 0.5, 1.0);
        let c = trend_rpe_certificate(&coin(0.1, -0.1, 0.9), &half, 4).unwrap();
        assert_eq!(c.status, CertificateStatus::NotApplicable);
        let mixed = LatticeMarketSpec::constant_probability(vec![0.2, 0.1], vec![-0.1, -0.2], &[0.5, 0.5]).unwrap();
        let c = trend_rpe_certificate(&mixed, &PolicyTriple::uniform(2, 0.5, 0.5, 1.0), 4).unwrap();
        assert_eq!(c.status, CertificateStatus::NotApplicable);
    }

    #[test]
    fn daily_trend_is_too_weak_for_the_conservative_base() {
        // u = 0.03, d = -0.01, w = 0.5 over a year with E[H] = 0.6 k: theta
        // reaches only about 2.25 at eps = 25.2 while the target is about 7.2.
        let triple = PolicyTriple::uniform(1, 0.5, 0.5, 1.0);
        let c = trend_rpe_certificate(&coin(0.03, -0.01, 0.6), &triple, 252).unwrap();
        assert_eq!(c.status, CertificateStatus::Fails);
        let a = &c.assets[0];
        assert_relative_eq!(a.epsilon, 25.2, epsilon = 1e-9);
        assert!(a.lower.unwrap() > a.epsilon);
        let report = super::super::worst_case_gain_loss_bound(&triple, &coin(0.03, -0.01, 0.6), 252).unwrap();
        assert!(report.bound > 0.0);
    }

    #[test]
    fn strong_trend_certificate_holds() {
        let triple = PolicyTriple::uniform(1, 0.5, 0.9, 1.0);
        let c = trend_rpe_certificate(&coin(0.95, -0.9, 1.0), &triple, 4).unwrap();
        assert!(c.holds(), "{c:?}");
        assert!(c.bound_cross_check.unwrap() > 0.0);
        let a = &c.assets[0];
        assert!(a.lower.unwrap() > a.epsilon_star.unwrap());
    }

    #[test]
    fn symmetric_window() {
        let triple = PolicyTriple::uniform(1, 0.5, 0.8, 1.0);
        let c = symmetric_rpe_certificate(&coin(0.5, -0.5, 0.9), &triple, 4).unwrap();
        assert!(c.holds(), "{c:?}");
        let c = symmetric_rpe_certificate(&coin(0.5, -0.5, 0.5), &triple, 4).unwrap();
        assert_eq!(c.status, CertificateStatus::Fails);
        assert_eq!(c.assets[0].epsilon, 0.0);
        let mut with_rate = triple.clone();
        with_rate.risk_free_rate = 0.001;
        let c = symmetric_rpe_certificate(&coin(0.5, -0.5, 0.9), &with_rate, 4).unwrap();
        assert_eq!(c.status, CertificateStatus::NotApplicable);
    }

    #[test]
    fn symmetric_lower_edge_near_eight() {
        for w in [0.01, 0.3, 0.7, 0.99] {
            let triple = PolicyTriple::uniform(1, 0.5, w, 1.0);
            let c = symmetric_rpe_certificate(&coin(0.02, -0.02, 0.5), &triple, 252).unwrap();
            let lower = c.assets[0].lower.unwrap();
            assert!((lower - 8.0).abs() <= 1.0, "w = {w}: {lower}");
        }
    }

    #[test]
    fn symmetric_lower_bound_cases() {
        let triple = PolicyTriple::uniform(1, 0.5, 0.5, 1.0);
        let b = symmetric_lower_bound(&coin(0.02, -0.02, 0.5), &triple, 2).unwrap();
        assert_relative_eq!(b, -1e-4, epsilon = 1e-15);
        let triple = PolicyTriple::uniform(1, 0.5, 0.8, 1.0);
        let b = symmetric_lower_bound(&coin(0.5, -0.5, 0.9), &triple, 4).unwrap();
        assert!(b > 0.0);
        assert!(symmetric_lower_bound(&coin(0.3, -0.5, 0.9), &triple, 4).is_err());
    }
}
