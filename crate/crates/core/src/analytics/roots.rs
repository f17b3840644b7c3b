//! Scalar root finding and the auxiliary functions used by the certificates.

use crate::error::{LatticeError, Result};

/// Convergence tolerance on both `|f|` and the bracket width.
pub const ROOT_TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 500;

/// Root of an increasing function on `[lo, inf)`, found by safeguarded
/// Newton steps inside a bisection bracket. The upper end of the bracket is
/// found by doubling from `lo + 1`.
pub fn increasing_root<F, D>(f: F, df: D, lo: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut a = lo;
    let fa = f(a);
    if fa >= 0.0 {
        return if fa <= ROOT_TOLERANCE {
            Ok(a)
        } else {
            Err(LatticeError::RootFinding(format!("function already positive ({fa:e}) at {lo}")))
        };
    }
    let mut step = 1.0;
    let mut b = lo + step;
    let mut expansions = 0;
    while f(b) < 0.0 {
        a = b;
        step *= 2.0;
        b = lo + step;
        expansions += 1;
        if expansions > 1100 || !b.is_finite() {
            return Err(LatticeError::RootFinding("no sign change found while expanding bracket".into()));
        }
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..MAX_ITERATIONS {
        let fx = f(x);
        if fx.abs() <= ROOT_TOLERANCE {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        if b - a <= ROOT_TOLERANCE * x.abs().max(1.0) {
            return Ok(0.5 * (a + b));
        }
        let slope = df(x);
        let newton = x - fx / slope;
        x = if slope > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
    }
    Err(LatticeError::RootFinding(format!("no convergence within {MAX_ITERATIONS} iterations")))
}

/// `theta(eps) = a^eps + b^eps`.
pub fn theta_aux(a: f64, b: f64, eps: f64) -> f64 {
    (eps * a.ln()).exp() + (eps * b.ln()).exp()
}

/// Derivative `a^eps ln a + b^eps ln b`.
pub fn theta_aux_derivative(a: f64, b: f64, eps: f64) -> f64 {
    let (la, lb) = (a.ln(), b.ln());
    (eps * la).exp() * la + (eps * lb).exp() * lb
}

fn check_theta_domain(a: f64, b: f64) -> Result<()> {
    let straddles = (a > 1.0 && b > 0.0 && b < 1.0) || (b > 1.0 && a > 0.0 && a < 1.0);
    if straddles && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(LatticeError::InvalidParameter(format!(
            "theta needs one base above 1 and the other in (0, 1), got a = {a}, b = {b}"
        )))
    }
}

/// Minimizer of `theta` over `eps >= 0`: the stationary point, or zero when
/// `theta` is already nondecreasing at the origin.
pub fn epsilon_star(a: f64, b: f64) -> Result<f64> {
    check_theta_domain(a, b)?;
    if theta_aux_derivative(a, b, 0.0) >= 0.0 {
        return Ok(0.0);
    }
    let second = |e: f64| {
        let (la, lb) = (a.ln(), b.ln());
        (e * la).exp() * la * la + (e * lb).exp() * lb * lb
    };
    increasing_root(|e| theta_aux_derivative(a, b, e), second, 0.0)
}

/// Inverse of `theta` on its increasing branch `eps >= epsilon_star(a, b)`.
/// Fails when `target` lies below the minimum of `theta`.
pub fn theta_aux_inverse(a: f64, b: f64, target: f64) -> Result<f64> {
    let start = epsilon_star(a, b)?;
    if theta_aux(a, b, start) > target {
        return Err(LatticeError::RootFinding(format!(
            "target {target} lies below the minimum of theta"
        )));
    }
    increasing_root(|e| theta_aux(a, b, e) - target, |e| theta_aux_derivative(a, b, e), start)
}

/// `phi(eps) = z^eps + z^-eps`.
pub fn phi_aux(z: f64, eps: f64) -> f64 {
    let l = eps * z.ln();
    l.exp() + (-l).exp()
}

/// Nonnegative solution of `phi(eps) = t` for `t >= 2`, from `y + 1/y = t`.
pub fn phi_inverse(z: f64, t: f64) -> Result<f64> {
    if !(z > 0.0 && z != 1.0 && z.is_finite()) {
        return Err(LatticeError::InvalidParameter(format!("phi base must be positive and not 1, got {z}")));
    }
    if !(t >= 2.0) {
        return Err(LatticeError::InvalidParameter(format!("phi takes values >= 2, got target {t}")));
    }
    let y = 0.5 * (t + (t * t - 4.0).sqrt());
    Ok((y.ln() / z.ln()).abs())
}
