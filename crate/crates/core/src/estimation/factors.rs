use serde::{Deserialize, Serialize};

use crate::error::{LatticeError, Result};

/// Historical real-valued returns, one chronological series per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSample {
    pub labels: Vec<String>,
    /// `series[i][t]`, oldest first.
    pub series: Vec<Vec<f64>>,
}

impl ReturnSample {
    pub fn new(labels: Vec<String>, series: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != series.len() {
            return Err(LatticeError::DimensionMismatch { expected: labels.len(), found: series.len() });
        }
        let len = series.first().map_or(0, Vec::len);
        for (i, s) in series.iter().enumerate() {
            if s.len() != len {
                return Err(LatticeError::DimensionMismatch { expected: len, found: s.len() });
            }
            if let Some(x) = s.iter().find(|&&x| !(x > -1.0 && x.is_finite())) {
                return Err(LatticeError::InvalidParameter(format!("series {i}: return {x} must exceed -1")));
            }
        }
        Ok(Self { labels, series })
    }

    /// Builds a sample from a `(T x n)` return matrix, one row per period.
    pub fn from_rows(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = labels.len();
        let mut series = vec![Vec::with_capacity(rows.len()); n];
        for row in rows {
            if row.len() != n {
                return Err(LatticeError::DimensionMismatch { expected: n, found: row.len() });
            }
            for (s, &x) in series.iter_mut().zip(row) {
                s.push(x);
            }
        }
        Self::new(labels, series)
    }

    pub fn assets(&self) -> usize {
        self.series.len()
    }

    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn geometric_mean_return(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), x| (s + x.ln_1p(), c + 1));
    ((sum / count as f64).exp_m1(), count)
}

/// Geometric-mean up and down factors `(u, d)` of one return series.
/// Zero returns belong to the up partition.
pub fn estimate_movement_factors(series: &[f64]) -> Result<(f64, f64)> {
    if let Some(x) = series.iter().find(|&&x| !(x > -1.0 && x.is_finite())) {
        return Err(LatticeError::InvalidParameter(format!("return {x} must exceed -1")));
    }
    let (u, ups) = geometric_mean_return(series.iter().copied().filter(|&x| x >= 0.0));
    let (d, downs) = geometric_mean_return(series.iter().copied().filter(|&x| x < 0.0));
    if ups == 0 || downs == 0 {
        return Err(LatticeError::Estimation(format!(
            "series has {ups} nonnegative and {downs} negative returns; supply movement factors manually"
        )));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(LatticeError::Estimation(format!(
            "estimated up factor {u} outside (0, 1); supply movement factors manually"
        )));
    }
    if !(d > -1.0 && d < 0.0) {
        return Err(LatticeError::Estimation(format!("estimated down factor {d} outside (-1, 0)")));
    }
    Ok((u, d))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // The (n - 1) denominators cancel.
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of the real returns with the diagonal forced to zero.
pub fn estimate_asset_correlation(sample: &ReturnSample) -> Result<Vec<Vec<f64>>> {
    if sample.len() < 2 {
        return Err(LatticeError::Estimation(format!(
            "correlation needs at least 2 observations, got {}",
            sample.len()
        )));
    }
    let n = sample.assets();
    if n > 1 {
        if let Some(i) = sample.series.iter().position(|s| s.iter().all(|&x| x == s[0])) {
            return Err(LatticeError::UndefinedCorrelation(i));
        }
    }
    let mut gamma = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = pearson(&sample.series[i], &sample.series[j])
                .ok_or(LatticeError::UndefinedCorrelation(i))?;
            gamma[i][j] = r;
            gamma[j][i] = r;
        }
    }
    Ok(gamma)
}

/// Maps each return to `u` when nonnegative and to `d` otherwise.
pub fn binarize_returns(series: &[f64], u: f64, d: f64) -> Vec<f64> {
    series.iter().map(|&x| if x >= 0.0 { u } else { d }).collect()
}
