//! Monte Carlo statistics of the gain-loss process.
//!
//! Path `j` always uses the generator seeded with `path_seed(master, j)`, and
//! per-path results are reduced in path-index order, so every statistic is
//! identical for any number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::lattice::LatticeMarketSpec;
use crate::policy::{run_policy, PolicyTriple};
use crate::rng::{path_rng, path_seed};

/// Mean gain-loss magnitude below which a traced per-asset weight is dropped.
pub const MEAN_THRESHOLD: f64 = 1e-4;

/// Sampling controls shared by every Monte Carlo routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    /// Worker threads; zero uses the global rayon pool.
    pub workers: usize,
}

impl McConfig {
    pub fn new(paths: usize, seed: u64, workers: usize) -> Self {
        Self { paths, seed, workers }
    }

    fn check(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(LatticeError::InvalidParameter(format!("need at least 2 paths, got {}", self.paths)));
        }
        Ok(())
    }
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LatticeError::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs `per_path` on every path of `config` and returns the results in
/// path-index order.
pub fn map_paths<T, F>(spec: &LatticeMarketSpec, k: usize, config: McConfig, per_path: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&crate::lattice::ReturnPath) -> Result<T> + Sync,
{
    config.check()?;
    in_pool(config.workers, || {
        (0..config.paths)
            .into_par_iter()
            .map(|j| {
                let mut rng = path_rng(path_seed(config.seed, j as u64));
                let path = spec.sample_with(k, &mut rng)?;
                per_path(&path)
            })
            .collect::<Result<Vec<T>>>()
    })?
}

/// Gain-loss series `G(0..=k)` of every sampled path.
pub fn simulate_gain_loss_paths(
    triple: &PolicyTriple,
    spec: &LatticeMarketSpec,
    k: usize,
    config: McConfig,
) -> Result<Vec<Vec<f64>>> {
    triple.validate()?;
    if triple.dim() != spec.n {
        return Err(LatticeError::DimensionMismatch { expected: spec.n, found: triple.dim() });
    }
    map_paths(spec, k, config, |path| Ok(run_policy(triple, path)?.gain_loss))
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance with the `n - 1` denominator.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Linear-interpolation quantile of sorted data (`R` type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-stage gain-loss statistics over the sampled paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainLossSummary {
    pub paths: usize,
    pub master_seed: u64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Empirical 2.5% quantile per stage.
    pub lower: Vec<f64>,
    /// Empirical 97.5% quantile per stage.
    pub upper: Vec<f64>,
}

impl GainLossSummary {
    pub fn from_paths(series: &[Vec<f64>], master_seed: u64) -> Result<Self> {
        let stages = series.first().map_or(0, Vec::len);
        if series.len() < 2 || series.iter().any(|s| s.len() != stages) {
            return Err(LatticeError::InvalidParameter("need at least 2 equal-length series".into()));
        }
        let mut summary = Self {
            paths: series.len(),
            master_seed,
            mean: Vec::with_capacity(stages),
            std: Vec::with_capacity(stages),
            lower: Vec::with_capacity(stages),
            upper: Vec::with_capacity(stages),
        };
        let mut column = vec![0.0; series.len()];
        for j in 0..stages {
            let mut acc = Welford::default();
            for (c, s) in column.iter_mut().zip(series) {
                *c = s[j];
                acc.push(s[j]);
            }
            column.sort_by(f64::total_cmp);
            summary.mean.push(acc.mean());
            summary.std.push(acc.std());
            summary.lower.push(quantile_sorted(&column, 0.025));
            summary.upper.push(quantile_sorted(&column, 0.975));
        }
        Ok(summary)
    }

    pub fn horizon(&self) -> usize {
        self.mean.len().saturating_sub(1)
    }

    pub fn final_mean(&self) -> f64 {
        *self.mean.last().unwrap_or(&0.0)
    }

    pub fn final_std(&self) -> f64 {
        *self.std.last().unwrap_or(&0.0)
    }

    /// Writes `stage,mean,std,lower,upper`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "mean", "std", "lower", "upper"])?;
        for j in 0..self.mean.len() {
            w.write_record([
                j.to_string(),
                self.mean[j].to_string(),
                self.std[j].to_string(),
                self.lower[j].to_string(),
                self.upper[j].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-stage mean, standard deviation and 95% prediction band of `G`.
pub fn mc_gain_loss(
    triple: &PolicyTriple,
    spec: &LatticeMarketSpec,
    k: usize,
    config: McConfig,
) -> Result<GainLossSummary> {
    let series = simulate_gain_loss_paths(triple, spec, k, config)?;
    GainLossSummary::from_paths(&series, config.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(LatticeError::InvalidParameter("weight grid is empty".into()));
    }
    if grid.iter().any(|w| !(0.0..=1.0).contains(w)) || grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(LatticeError::InvalidParameter("weight grid must be strictly increasing in [0, 1]".into()));
    }
    Ok(())
}

/// Terminal mean and standard deviation of `G(k)` for `w_i = omega` on
/// every asset, each grid point driven by the same paths.
pub fn weight_frontier(
    spec: &LatticeMarketSpec,
    base: &PolicyTriple,
    grid: &[f64],
    k: usize,
    config: McConfig,
) -> Result<Vec<FrontierPoint>> {
    let weights = |omega: f64| vec![omega; spec.n];
    frontier_with(spec, base, grid, k, config, weights)
}

fn frontier_with(
    spec: &LatticeMarketSpec,
    base: &PolicyTriple,
    grid: &[f64],
    k: usize,
    config: McConfig,
    weights: impl Fn(f64) -> Vec<f64>,
) -> Result<Vec<FrontierPoint>> {
    check_grid(grid)?;
    grid.iter()
        .map(|&omega| {
            let triple = PolicyTriple { weights: weights(omega), ..base.clone() };
            let summary = mc_gain_loss(&triple, spec, k, config)?;
            Ok(FrontierPoint { weight: omega, mean: summary.final_mean(), std: summary.final_std() })
        })
        .collect()
}

/// Writes `weight,mean,std`.
pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["weight", "mean", "std"])?;
    for p in points {
        w.write_record([p.weight.to_string(), p.mean.to_string(), p.std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of reading a weight off a frontier at a target standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracedWeight {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
    /// The target lies below every attainable standard deviation; the
    /// weight is then zero.
    pub below_minimum: bool,
    /// Number of leading frontier points with nondecreasing std that were used.
    pub monotone_prefix: usize,
}

/// Largest weight whose standard deviation does not exceed `target_std`,
/// interpolated linearly between the bracketing grid points. Only the
/// longest prefix with nondecreasing std is considered.
pub fn trace_optimal_weight(frontier: &[FrontierPoint], target_std: f64) -> Result<TracedWeight> {
    if frontier.is_empty() {
        return Err(LatticeError::InvalidParameter("frontier is empty".into()));
    }
    if !(target_std > 0.0) {
        return Err(LatticeError::InvalidParameter(format!("target std must be positive, got {target_std}")));
    }
    let prefix = 1 + frontier.windows(2).take_while(|p| p[1].std >= p[0].std).count();
    if prefix < frontier.len() {
        log::warn!("frontier std is not monotone; using the first {prefix} of {} points", frontier.len());
    }
    let points = &frontier[..prefix];
    if target_std < points[0].std {
        let first = points[0];
        return Ok(TracedWeight { weight: 0.0, mean: first.mean, std: first.std, below_minimum: true, monotone_prefix: prefix });
    }
    let j = points.iter().rposition(|p| p.std <= target_std).unwrap_or(0);
    let hit = points[j];
    if j + 1 == points.len() || hit.std == target_std {
        // Among grid points sharing this std prefer the larger mean.
        let best = points
            .iter()
            .filter(|p| p.std == hit.std)
            .fold(hit, |acc, &p| if p.mean > acc.mean { p } else { acc });
        return Ok(TracedWeight { weight: best.weight, mean: best.mean, std: best.std, below_minimum: false, monotone_prefix: prefix });
    }
    let next = points[j + 1];
    let t = (target_std - hit.std) / (next.std - hit.std);
    Ok(TracedWeight {
        weight: hit.weight + t * (next.weight - hit.weight),
        mean: hit.mean + t * (next.mean - hit.mean),
        std: target_std,
        below_minimum: false,
        monotone_prefix: prefix,
    })
}

/// Weight given to the assets kept by a top-n selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum TopWeight {
    /// Each kept asset retains its own traced weight.
    Traced,
    /// Every kept asset receives this common weight.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerAssetOptions {
    pub target_std: f64,
    pub top_n: Option<usize>,
    pub top_weight: TopWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerAssetWeights {
    pub weights: Vec<f64>,
    /// Traced point of each single-asset frontier, with the mean restricted
    /// to that asset's own gain-loss.
    pub traced: Vec<TracedWeight>,
    /// Assets kept after thresholding and top-n selection.
    pub selected: Vec<usize>,
}

/// Per-asset weights: each asset's frontier is built with every other weight
/// set to zero, then traced against the common target. Assets whose traced
/// mean gain-loss is below [`MEAN_THRESHOLD`] in magnitude get weight zero;
/// with `top_n`, only the assets with the largest traced means are kept.
pub fn per_asset_optimal_weights(
    spec: &LatticeMarketSpec,
    base: &PolicyTriple,
    grid: &[f64],
    k: usize,
    config: McConfig,
    options: PerAssetOptions,
) -> Result<PerAssetWeights> {
    let n = spec.n;
    let r = base.risk_free_rate;
    let growth = (1.0 + r).powi(k as i32) - 1.0;
    let mut traced = Vec::with_capacity(n);
    for i in 0..n {
        let frontier = frontier_with(spec, base, grid, k, config, |omega| {
            let mut w = vec![0.0; n];
            w[i] = omega;
            w
        })?;
        // Idle assets contribute their deterministic cash growth.
        let idle: f64 = (0..n).filter(|&j| j != i).map(|j| base.alpha * growth * base.asset_capital(j)).sum();
        let own: Vec<FrontierPoint> =
            frontier.iter().map(|p| FrontierPoint { mean: p.mean - idle, ..*p }).collect();
        traced.push(trace_optimal_weight(&own, options.target_std)?);
    }
    let mut candidates: Vec<usize> = (0..n).filter(|&i| traced[i].mean.abs() >= MEAN_THRESHOLD).collect();
    if let Some(top) = options.top_n {
        candidates.sort_by(|&a, &b| traced[b].mean.total_cmp(&traced[a].mean).then(a.cmp(&b)));
        candidates.truncate(top);
        candidates.sort_unstable();
    }
    let mut weights = vec![0.0; n];
    for &i in &candidates {
        weights[i] = match options.top_weight {
            TopWeight::Traced => traced[i].weight,
            TopWeight::Constant(w) => w,
        };
    }
    Ok(PerAssetWeights { weights, traced, selected: candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point(weight: f64, mean: f64, std: f64) -> FrontierPoint {
        FrontierPoint { weight, mean, std }
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let mut acc = Welford::default();
        xs.iter().for_each(|&x| acc.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert_relative_eq!(acc.mean(), mean, epsilon = 1e-14);
        assert_relative_eq!(acc.variance(), var, epsilon = 1e-13);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_relative_eq!(quantile_sorted(&xs, 0.025), 2.5, epsilon = 1e-12);
        assert_relative_eq!(quantile_sorted(&xs, 0.975), 97.5, epsilon = 1e-12);
        assert_eq!(quantile_sorted(&[3.0], 0.5), 3.0);
    }

    #[test]
    fn tracing_cases() {
        let f = [point(0.0, 0.0, 0.0), point(0.5, 1.0, 1.0), point(1.0, 3.0, 2.0)];
        let t = trace_optimal_weight(&f, 1.0).unwrap();
        assert_eq!((t.weight, t.mean), (0.5, 1.0));
        let t = trace_optimal_weight(&f, 1.5).unwrap();
        assert_relative_eq!(t.weight, 0.75, epsilon = 1e-15);
        assert_relative_eq!(t.mean, 2.0, epsilon = 1e-15);
        let t = trace_optimal_weight(&f, 5.0).unwrap();
        assert_eq!(t.weight, 1.0);
        let g = [point(0.1, 0.0, 0.5), point(0.5, 1.0, 1.0)];
        let t = trace_optimal_weight(&g, 0.2).unwrap();
        assert!(t.below_minimum);
        assert_eq!(t.weight, 0.0);
    }

    #[test]
    fn non_monotone_tail_is_ignored() {
        let f = [point(0.0, 0.0, 0.0), point(0.5, 1.0, 1.0), point(0.8, 1.5, 0.5), point(1.0, 2.0, 3.0)];
        let t = trace_optimal_weight(&f, 2.0).unwrap();
        assert_eq!(t.monotone_prefix, 2);
        assert_eq!(t.weight, 0.5);
    }

    #[test]
    fn zero_weight_is_exact() {
        let spec = LatticeMarketSpec::constant_probability(vec![0.1], vec![-0.1], &[0.5]).unwrap();
        let mut triple = PolicyTriple::uniform(1, 0.4, 0.0, 2.0);
        triple.risk_free_rate = 0.01;
        let s = mc_gain_loss(&triple, &spec, 5, McConfig::new(100, 3, 1)).unwrap();
        assert_relative_eq!(s.final_mean(), 0.4 * (1.01f64.powi(5) - 1.0) * 2.0, max_relative = 1e-12);
        assert_eq!(s.final_std(), 0.0);
        assert_eq!(s.lower, s.upper);
    }

    #[test]
    fn too_few_paths() {
        let spec = LatticeMarketSpec::constant_probability(vec![0.1], vec![-0.1], &[0.5]).unwrap();
        let triple = PolicyTriple::uniform(1, 0.5, 0.5, 1.0);
        assert!(mc_gain_loss(&triple, &spec, 3, McConfig::new(1, 0, 1)).is_err());
    }
}
