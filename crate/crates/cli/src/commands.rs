//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::Days;
use lattice_core::analytics::{worst_case_gain_loss_bound, BoundReport, Certificate};
use lattice_core::backtest::{
    compute_returns, cost_rate_from_bps, equal_allocation, gain_loss_allocation, load_price_csv,
    normalized_allocation, run_backtest, PricePanel, RateConvention,
};
use lattice_core::estimation::{estimate_spec, feasibility_check, ReturnSample};
use lattice_core::lattice::simulate_prices;
use lattice_core::montecarlo::{
    mc_gain_loss, per_asset_optimal_weights, trace_optimal_weight, weight_frontier, write_frontier_csv, McConfig,
    PerAssetOptions, TopWeight,
};
use lattice_core::rng::{path_rng, path_seed};
use lattice_core::{LatticeMarketSpec, PolicyTriple};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    AllocKind, BacktestArgs, BoundsArgs, Convention, EstimateArgs, FrontierArgs, GlobalArgs, SimulateArgs, TopMode,
    TripleArgs,
};

/// A well-formed run whose outcome is negative: an infeasible fit or a
/// policy with no positivity guarantee. Maps to exit code 1.
#[derive(Debug)]
pub struct SemanticFailure(pub String);

impl std::fmt::Display for SemanticFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SemanticFailure {}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn read_spec(path: &Path) -> Result<LatticeMarketSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read spec {}", path.display()))?;
    LatticeMarketSpec::from_json(&text).with_context(|| format!("invalid spec {}", path.display()))
}

fn read_prices(path: &Path) -> Result<PricePanel> {
    load_price_csv(path).with_context(|| format!("cannot load prices {}", path.display()))
}

fn mc_config(global: &GlobalArgs) -> McConfig {
    McConfig::new(global.paths, global.seed, global.workers)
}

/// Parses a weight list: one value broadcast to `n` assets, or exactly `n`
/// comma-separated values.
pub fn parse_weights(text: &str, n: usize) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("cannot parse weight '{}'", s.trim())))
        .collect::<Result<Vec<_>>>()?;
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values),
        len => bail!("expected 1 or {n} weights, got {len}"),
    }
}

/// Parses a grid given as a comma list or as `start:stop:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| s.trim().parse::<f64>().with_context(|| format!("cannot parse grid value '{}'", s.trim()));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
            if !(step > 0.0) || !(stop >= start) {
                bail!("grid range {text} must have step > 0 and stop >= start");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|j| (start + j as f64 * step).min(stop)).collect())
        }
        [_] => text.split(',').map(parse).collect(),
        _ => bail!("grid must be a comma list or start:stop:step, got {text}"),
    }
}

fn read_weights_field(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))?;
    let weights: Vec<f64> = serde_json::from_value(value.get("weights").cloned().unwrap_or(Value::Null))
        .with_context(|| format!("{} has no numeric \"weights\" array", path.display()))?;
    if weights.len() != n {
        bail!("{} holds {} weights for {n} assets", path.display(), weights.len());
    }
    Ok(weights)
}

fn read_alloc_file(path: &Path, n: usize, labels: Option<&[String]>) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))?;
    let raw: Vec<f64> = match value {
        Value::Array(_) => serde_json::from_value(value)?,
        Value::Object(map) => {
            let labels = labels.ok_or_else(|| anyhow!("a label-keyed allocation needs asset labels from a price file"))?;
            labels
                .iter()
                .map(|l| {
                    map.get(l)
                        .and_then(Value::as_f64)
                        .ok_or_else(|| anyhow!("allocation file has no numeric entry for '{l}'"))
                })
                .collect::<Result<_>>()?
        }
        _ => bail!("allocation file must hold an array or an object"),
    };
    if raw.len() != n {
        bail!("allocation file holds {} weights for {n} assets", raw.len());
    }
    Ok(normalized_allocation(&raw)?)
}

/// Builds the policy triple for `n` assets. `labels` names the assets when
/// they come from a price file.
pub fn resolve_triple(args: &TripleArgs, n: usize, labels: Option<&[String]>) -> Result<PolicyTriple> {
    let weights = match &args.weights_from {
        Some(path) => read_weights_field(path, n)?,
        None => parse_weights(&args.weights, n)?,
    };
    let allocation = match args.alloc {
        AllocKind::Ew => equal_allocation(n),
        AllocKind::Cw => {
            let path = args.alloc_file.as_ref().ok_or_else(|| anyhow!("--alloc cw requires --alloc-file"))?;
            read_alloc_file(path, n, labels)?
        }
        AllocKind::Gl => {
            let path = args.train_prices.as_ref().ok_or_else(|| anyhow!("--alloc gl requires --train-prices"))?;
            let panel = read_prices(path)?;
            if panel.assets() != n {
                bail!("training prices hold {} assets, expected {n}", panel.assets());
            }
            gain_loss_allocation(&panel)?
        }
    };
    let convention = match args.rate_convention {
        Convention::Simple => RateConvention::Simple,
        Convention::Compound => RateConvention::Compound,
    };
    let triple = PolicyTriple {
        alpha: args.alpha,
        weights,
        allocation,
        initial_capital: args.v0,
        risk_free_rate: convention.per_period(args.rf_annual),
        cost_rate: cost_rate_from_bps(args.cost_bps),
    };
    triple.validate()?;
    Ok(triple)
}

fn triple_echo(args: &TripleArgs, triple: &PolicyTriple) -> Value {
    json!({
        "alpha": triple.alpha,
        "weights": triple.weights,
        "weights_from": args.weights_from,
        "alloc": args.alloc,
        "allocation": triple.allocation,
        "alloc_file": args.alloc_file,
        "train_prices": args.train_prices,
        "rf_annual": args.rf_annual,
        "rate_convention": args.rate_convention,
        "risk_free_rate": triple.risk_free_rate,
        "cost_bps": args.cost_bps,
        "cost_rate": triple.cost_rate,
        "v0": triple.initial_capital,
    })
}

pub fn estimate(global: &GlobalArgs, args: &EstimateArgs) -> Result<()> {
    let panel = read_prices(&args.prices)?;
    let returns = compute_returns(&panel)?;
    let sample = ReturnSample::from_rows(panel.labels.clone(), &returns)?;
    let (spec, fit) = estimate_spec(&sample, args.m)?;
    let feasibility = feasibility_check(&spec);
    log::info!("fitted {} assets on {} returns with m = {}", spec.n, returns.len(), args.m);
    if feasibility.feasible {
        write_json(&args.out, &spec)?;
    }
    if let Some(path) = &args.report {
        let config = json!({
            "command": "estimate",
            "seed": global.seed,
            "prices": args.prices,
            "m": args.m,
            "out": args.out,
            "periods": panel.len(),
            "first_date": panel.dates.first(),
            "last_date": panel.dates.last(),
        });
        write_json(path, &json!({ "config": config, "labels": panel.labels, "fit": fit, "feasibility": feasibility }))?;
    }
    if !feasibility.feasible {
        let worst = feasibility.slack.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(SemanticFailure(format!("fitted market is infeasible (minimum slack {worst:e})")).into());
    }
    Ok(())
}

pub fn simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let triple = resolve_triple(&args.triple, spec.n, None)?;
    let config = mc_config(global);
    let summary = mc_gain_loss(&triple, &spec, global.k, config)?;
    let echo = json!({
        "command": "simulate",
        "global": global,
        "spec": args.spec,
        "triple": triple_echo(&args.triple, &triple),
    });
    write_json(&args.out, &json!({ "config": echo, "summary": summary }))?;
    if let Some(path) = &args.csv {
        summary.write_csv(create(path)?)?;
    }
    if let Some(path) = &args.prices_out {
        let mut rng = path_rng(path_seed(global.seed, 0));
        let path0 = spec.sample_with(global.k, &mut rng)?;
        let prices = simulate_prices(&path0, &vec![args.initial_price; spec.n])?;
        let dates = (0..prices.len())
            .map(|j| {
                args.start_date
                    .checked_add_days(Days::new(j as u64))
                    .ok_or_else(|| anyhow!("date overflow after {}", args.start_date))
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..spec.n).map(|i| format!("asset{i}")).collect();
        PricePanel::new(dates, labels, prices)?.write_csv(create(path)?)?;
    }
    log::info!("mean G(k) = {:.6}, std = {:.6}", summary.final_mean(), summary.final_std());
    Ok(())
}

fn status_label(cert: &Certificate) -> String {
    serde_json::to_value(cert.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn print_bounds(report: &BoundReport) {
    println!("horizon k = {}, alpha = {}", report.horizon, report.alpha);
    println!("{:>6} {:>12} {:>14}", "asset", "E[H(k)]", "contribution");
    for a in &report.assets {
        println!("{:>6} {:>12.4} {:>14.6e}", a.asset, a.expected_up_count, a.contribution);
    }
    println!("worst-case bound on E[G(k)]: {:.6e}", report.bound);
    println!();
    println!("{:<16} {:<15} {:>14}  note", "certificate", "status", "min margin");
    let certs = report.special_case.iter().chain([&report.trend, &report.symmetric]);
    for cert in certs {
        let margin = cert.min_margin().map_or_else(|| "-".to_owned(), |m| format!("{m:.6e}"));
        println!("{:<16} {:<15} {:>14}  {}", cert.name, status_label(cert), margin, cert.reason.as_deref().unwrap_or(""));
    }
}

pub fn bounds(global: &GlobalArgs, args: &BoundsArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let triple = resolve_triple(&args.triple, spec.n, None)?;
    let report = worst_case_gain_loss_bound(&triple, &spec, global.k)?;
    print_bounds(&report);
    let certified = report.bound > 0.0
        || report.special_case.as_ref().is_some_and(Certificate::holds)
        || report.trend.holds()
        || report.symmetric.holds();
    if let Some(path) = &args.out {
        let echo = json!({
            "command": "bounds",
            "global": global,
            "spec": args.spec,
            "triple": triple_echo(&args.triple, &triple),
        });
        write_json(path, &json!({ "config": echo, "positive_expectation": certified, "report": report }))?;
    }
    if !certified {
        return Err(SemanticFailure("no certificate establishes a positive expected gain-loss".into()).into());
    }
    Ok(())
}

pub fn frontier(global: &GlobalArgs, args: &FrontierArgs) -> Result<()> {
    let spec = read_spec(&args.spec)?;
    let base = resolve_triple(&args.triple, spec.n, None)?;
    let grid = parse_grid(&args.grid)?;
    let config = mc_config(global);
    let points = weight_frontier(&spec, &base, &grid, global.k, config)?;
    let constant = trace_optimal_weight(&points, args.target_std)?;
    if constant.below_minimum {
        log::warn!("target std {} is below every frontier std; weight set to 0", args.target_std);
    }
    let (mode, weights, per_asset) = if args.per_asset || args.top_n.is_some() {
        let top_weight = match (args.top_n, args.top_weight) {
            (Some(_), TopMode::Constant) => TopWeight::Constant(constant.weight),
            _ => TopWeight::Traced,
        };
        let options = PerAssetOptions { target_std: args.target_std, top_n: args.top_n, top_weight };
        let result = per_asset_optimal_weights(&spec, &base, &grid, global.k, config, options)?;
        let mode = if args.top_n.is_some() { "top" } else { "vary" };
        (mode, result.weights.clone(), Some(result))
    } else {
        ("constant", vec![constant.weight; spec.n], None)
    };
    let echo = json!({
        "command": "frontier",
        "global": global,
        "spec": args.spec,
        "triple": triple_echo(&args.triple, &base),
        "grid": grid,
        "target_std": args.target_std,
        "per_asset": args.per_asset,
        "top_n": args.top_n,
        "top_weight": args.top_weight,
    });
    let output = json!({
        "config": echo,
        "frontier": points,
        "constant": constant,
        "per_asset": per_asset,
        "mode": mode,
        "weights": weights,
    });
    write_json(&args.out, &output)?;
    if let Some(path) = &args.csv {
        write_frontier_csv(&points, create(path)?)?;
    }
    log::info!("traced constant weight {:.4} (mean {:.6})", constant.weight, constant.mean);
    Ok(())
}

pub fn backtest(global: &GlobalArgs, args: &BacktestArgs) -> Result<()> {
    let panel = read_prices(&args.prices)?;
    let returns = compute_returns(&panel)?;
    let triple = resolve_triple(&args.triple, panel.assets(), Some(&panel.labels))?;
    let report = run_backtest(&triple, &returns)?;
    let echo = json!({
        "command": "backtest",
        "global": global,
        "prices": args.prices,
        "labels": panel.labels,
        "first_date": panel.dates.first(),
        "last_date": panel.dates.last(),
        "triple": triple_echo(&args.triple, &triple),
    });
    write_json(&args.out, &json!({ "config": echo, "report": report }))?;
    if let Some(path) = &args.csv {
        report.write_csv(create(path)?)?;
    }
    log::info!("final gain-loss {:.6}, max drawdown {:.4}", report.final_gain_loss, report.max_drawdown);
    Ok(())
}
