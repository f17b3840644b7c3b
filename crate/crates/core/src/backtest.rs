//! Price ingestion, return computation and out-of-sample policy runs.
//!
//! Price files are wide CSV: a `date` column in ISO-8601 followed by one
//! column of positive prices per ticker, dates strictly increasing.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};
use crate::policy::{max_drawdown, run_policy_on_returns, PolicyTriple};

/// Trading periods per year used to convert annual rates.
pub const PERIODS_PER_YEAR: f64 = 252.0;

/// A validated price matrix, one row per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<String>,
    /// `prices[t][i]`.
    pub prices: Vec<Vec<f64>>,
}

impl PricePanel {
    /// Builds a panel, enforcing positive prices and increasing dates.
    pub fn new(dates: Vec<NaiveDate>, labels: Vec<String>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(LatticeError::DimensionMismatch { expected: dates.len(), found: prices.len() });
        }
        let n = labels.len();
        for (t, row) in prices.iter().enumerate() {
            if row.len() != n {
                return Err(LatticeError::RaggedRow { row: t + 2, expected: n + 1, found: row.len() + 1 });
            }
            if let Some((i, &p)) = row.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p.is_finite())) {
                return Err(LatticeError::NonPositivePrice { row: t + 2, column: labels[i].clone(), value: p });
            }
            if t > 0 {
                let date = dates[t].to_string();
                if dates[t] == dates[t - 1] {
                    return Err(LatticeError::DuplicateDate { row: t + 2, date });
                }
                if dates[t] < dates[t - 1] {
                    return Err(LatticeError::UnorderedDate { row: t + 2, date });
                }
            }
        }
        Ok(Self { dates, labels, prices })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn assets(&self) -> usize {
        self.labels.len()
    }

    /// Rows `start..end` as a new panel.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            dates: self.dates[start..end].to_vec(),
            labels: self.labels.clone(),
            prices: self.prices[start..end].to_vec(),
        }
    }

    /// Writes the panel in the wide format accepted by [`read_price_csv`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (date, row) in self.dates.iter().zip(&self.prices) {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a price panel from a file.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PricePanel> {
    let file = std::fs::File::open(path)?;
    read_price_csv(file)
}

/// Reads a price panel from any reader. Row numbers in errors are file line
/// numbers, the header being line 1.
pub fn read_price_csv<R: Read>(reader: R) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::to_ascii_lowercase).as_deref() != Some("date") {
        return Err(LatticeError::MalformedCsv("first column must be 'date'".into()));
    }
    if header.len() < 2 {
        return Err(LatticeError::MalformedCsv("no ticker columns".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for (t, record) in rdr.records().enumerate() {
        let record = record?;
        let row = t + 2;
        if record.len() != header.len() {
            return Err(LatticeError::RaggedRow { row, expected: header.len(), found: record.len() });
        }
        let raw_date = &record[0];
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| LatticeError::Parse {
            row,
            column: "date".into(),
            value: raw_date.into(),
        })?;
        let values = labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let cell = &record[i + 1];
                let value: f64 = cell.parse().map_err(|_| LatticeError::Parse {
                    row,
                    column: label.clone(),
                    value: cell.into(),
                })?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(LatticeError::NonPositivePrice { row, column: label.clone(), value });
                }
                Ok(value)
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(&prev) = dates.last() {
            if date == prev {
                return Err(LatticeError::DuplicateDate { row, date: raw_date.into() });
            }
            if date < prev {
                return Err(LatticeError::UnorderedDate { row, date: raw_date.into() });
            }
        }
        dates.push(date);
        prices.push(values);
    }
    Ok(PricePanel { dates, labels, prices })
}

/// Simple returns `S(t+1)/S(t) - 1`, one row per period.
pub fn compute_returns(panel: &PricePanel) -> Result<Vec<Vec<f64>>> {
    if panel.len() < 2 {
        return Err(LatticeError::InvalidParameter(format!(
            "need at least 2 price rows, got {}",
            panel.len()
        )));
    }
    Ok(panel
        .prices
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b / a - 1.0).collect())
        .collect())
}

/// Conversion of an annual risk-free rate to a per-period rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConvention {
    /// `annual / 252`.
    #[default]
    Simple,
    /// `(1 + annual)^(1/252) - 1`.
    Compound,
}

impl RateConvention {
    pub fn per_period(self, annual: f64) -> f64 {
        match self {
            RateConvention::Simple => annual / PERIODS_PER_YEAR,
            RateConvention::Compound => (annual.ln_1p() / PERIODS_PER_YEAR).exp_m1(),
        }
    }
}

/// Cost rate per unit of traded notional from basis points.
pub fn cost_rate_from_bps(bps: f64) -> f64 {
    bps / 1e4
}

/// Equal allocation `1/n`.
pub fn equal_allocation(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Normalizes nonnegative raw weights to sum to one.
pub fn normalized_allocation(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(LatticeError::InvalidParameter("allocation weights must be nonnegative".into()));
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(LatticeError::InvalidParameter("allocation weights sum to zero".into()));
    }
    Ok(raw.iter().map(|x| x / total).collect())
}

/// Allocation proportional to each asset's absolute gain-loss over the
/// panel, `|S_i(end)/S_i(start) - 1|`.
pub fn gain_loss_allocation(panel: &PricePanel) -> Result<Vec<f64>> {
    let (Some(first), Some(last)) = (panel.prices.first(), panel.prices.last()) else {
        return Err(LatticeError::InvalidParameter("empty price panel".into()));
    };
    let raw: Vec<f64> = last.iter().zip(first).map(|(b, a)| (b / a - 1.0).abs()).collect();
    normalized_allocation(&raw)
}

/// Performance of a policy over realized returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub periods: usize,
    /// `G(0..=T)`.
    pub gain_loss: Vec<f64>,
    pub final_gain_loss: f64,
    /// Sample std of the per-period increments `G(t+1) - G(t)`.
    pub increment_std: f64,
    /// Sample std of the gain-loss level `G(0..=T)`.
    pub level_std: f64,
    /// Largest peak-to-trough decline of the account value, as a fraction.
    pub max_drawdown: f64,
    pub total_cost: f64,
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Runs the policy with costs over real-valued returns (each `> -1`).
pub fn run_backtest(triple: &PolicyTriple, returns: &[Vec<f64>]) -> Result<BacktestReport> {
    let traj = run_policy_on_returns(triple, returns)?;
    let increments: Vec<f64> = traj.gain_loss.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(BacktestReport {
        periods: returns.len(),
        final_gain_loss: *traj.gain_loss.last().unwrap_or(&0.0),
        increment_std: sample_std(&increments),
        level_std: sample_std(&traj.gain_loss),
        max_drawdown: max_drawdown(&traj.total)?,
        total_cost: *traj.cumulative_cost.last().unwrap_or(&0.0),
        gain_loss: traj.gain_loss,
    })
}

impl BacktestReport {
    /// Writes `period,gain_loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "gain_loss"])?;
        for (t, g) in self.gain_loss.iter().enumerate() {
            w.write_record([t.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
