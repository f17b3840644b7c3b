//! Brute-force oracles shared by the integration tests. They evaluate the
//! model formulas directly and never call the enumeration or policy code
//! under test.
#![allow(dead_code)]

use lattice_core::{LatticeMarketSpec, PolicyTriple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up-probability of asset `i` given lag windows `hist[l]` (most recent first).
pub fn up_probability(spec: &LatticeMarketSpec, hist: &[Vec<f64>], i: usize) -> f64 {
    let phi = &spec.markov_coeffs[i];
    let mut p = phi[0];
    for j in 1..=spec.m {
        p += phi[j] * hist[i][j - 1];
    }
    for l in 0..spec.n {
        p += spec.asset_correlation[i][l] * hist[l][0];
    }
    p
}

/// Every path of length `k` as `(returns[stage][asset], probability)`,
/// enumerated by bitmask over all `n k` moves.
pub fn brute_force_paths(spec: &LatticeMarketSpec, k: usize) -> Vec<(Vec<Vec<f64>>, f64)> {
    let n = spec.n;
    let total = 1usize << (n * k);
    let mut out = Vec::with_capacity(total);
    for mask in 0..total {
        let mut hist = spec.initial_history.clone();
        let mut prob = 1.0;
        let mut rows = Vec::with_capacity(k);
        for stage in 0..k {
            let mut row = vec![0.0; n];
            for i in 0..n {
                let p = up_probability(spec, &hist, i);
                let up = mask >> (stage * n + i) & 1 == 1;
                prob *= if up { p } else { 1.0 - p };
                row[i] = if up { spec.up_factors[i] } else { spec.down_factors[i] };
            }
            for i in 0..n {
                if spec.m > 0 {
                    hist[i].rotate_right(1);
                    hist[i][0] = row[i];
                }
            }
            rows.push(row);
        }
        out.push((rows, prob));
    }
    out
}

/// Account value after the given returns from the product form, cost-free.
pub fn product_form_value(triple: &PolicyTriple, returns: &[Vec<f64>]) -> f64 {
    let r = triple.risk_free_rate;
    (0..triple.weights.len())
        .map(|i| {
            let w = triple.weights[i];
            let long: f64 = returns.iter().map(|x| 1.0 + r + w * (x[i] - r)).product();
            let short: f64 = returns.iter().map(|x| 1.0 - w * x[i]).product();
            triple.allocation[i] * triple.initial_capital * (triple.alpha * long + (1.0 - triple.alpha) * short)
        })
        .sum()
}

/// Exact `E[G(k)]` by brute force.
pub fn exact_expected_gain(spec: &LatticeMarketSpec, triple: &PolicyTriple, k: usize) -> f64 {
    brute_force_paths(spec, k)
        .iter()
        .map(|(rows, p)| p * (product_form_value(triple, rows) - triple.initial_capital))
        .sum()
}

/// Exact marginal up-probabilities `P(X_i(j) = u_i)` for `j < k`.
pub fn exact_marginals(spec: &LatticeMarketSpec, k: usize) -> Vec<Vec<f64>> {
    let mut marg = vec![vec![0.0; spec.n]; k];
    for (rows, p) in brute_force_paths(spec, k) {
        for (j, row) in rows.iter().enumerate() {
            for i in 0..spec.n {
                if row[i] == spec.up_factors[i] {
                    marg[j][i] += p;
                }
            }
        }
    }
    marg
}

/// A triple with `alpha` and every weight in the open unit interval.
pub fn random_open_triple<R: rand::Rng>(rng: &mut R, n: usize) -> PolicyTriple {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut allocation: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = allocation[..n - 1].iter().sum();
    allocation[n - 1] = 1.0 - head;
    PolicyTriple {
        alpha: rng.random_range(0.05..0.95),
        weights: (0..n).map(|_| rng.random_range(0.05..0.95)).collect(),
        allocation,
        initial_capital: rng.random_range(0.5..2.0),
        risk_free_rate: 0.0,
        cost_rate: 0.0,
    }
}
