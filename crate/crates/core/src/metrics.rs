//! Regression metrics and a 1D Gaussian kernel density estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub r2: f64,
    pub mae: f64,
    /// Percent. `None` when some truth value is zero.
    pub mape: Option<f64>,
    pub n: usize,
}

impl MetricReport {
    pub fn mape_defined(&self) -> bool {
        self.mape.is_some()
    }
}

/// RMSE, R² = 1 − SSE/SST, MAE and MAPE (×100).
///
/// Constant truth gives SST = 0; R² is then 1 for an exact prediction and
/// −∞ otherwise.
pub fn regression_metrics(truth: &[f64], pred: &[f64]) -> Result<MetricReport> {
    if truth.len() != pred.len() {
        return Err(Error::input(format!(
            "truth has {} values, prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::input("metrics need at least one value"));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let mut sse = 0.0;
    let mut sst = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut mape_ok = true;
    for (t, p) in truth.iter().zip(pred) {
        let e = t - p;
        sse += e * e;
        sst += (t - mean) * (t - mean);
        abs += e.abs();
        if *t == 0.0 {
            mape_ok = false;
        } else {
            pct += (e / t).abs();
        }
    }
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok(MetricReport {
        rmse: (sse / n).sqrt(),
        r2,
        mae: abs / n,
        mape: mape_ok.then(|| 100.0 * pct / n),
        n: truth.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// Set when the samples had zero spread and the fallback bandwidth was used.
    pub degenerate: bool,
}

pub const KDE_FALLBACK_BANDWIDTH: f64 = 1e-3;

/// Gaussian KDE with Scott's bandwidth n^(−1/5)·std.
pub fn kde_gaussian(samples: &[f64], grid: &[f64]) -> Result<Kde> {
    if samples.len() < 2 {
        return Err(Error::input("kde needs at least two samples"));
    }
    if grid.is_empty() {
        return Err(Error::input("kde grid is empty"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let (bandwidth, degenerate) = if var > 0.0 {
        (n.powf(-0.2) * var.sqrt(), false)
    } else {
        (KDE_FALLBACK_BANDWIDTH, true)
    };
    let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|g| {
            norm * samples
                .iter()
                .map(|x| {
                    let u = (g - x) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(Kde {
        density,
        bandwidth,
        degenerate,
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
