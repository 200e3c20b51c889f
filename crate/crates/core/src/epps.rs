//! Summary tables of correlation coefficients and Epps curves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corr::{lagged_corr, sync_corr, CorrMatrix};
use crate::error::{Error, Result};
use crate::returns::{LagSplit, ReturnPanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub period: String,
    /// Lag-aligned rows behind the lagged coefficients.
    #[serde(rename = "T")]
    pub rows: usize,
    #[serde(rename = "h")]
    pub horizon_minutes: u32,
    /// Mean and standard deviation of the synchronous coefficients over the
    /// `N(N-1)/2` distinct pairs.
    pub mean_rho: f64,
    pub sd_rho: f64,
    /// Mean and standard deviation over all `N^2` lagged coefficients.
    #[serde(rename = "mean_C")]
    pub mean_c: f64,
    #[serde(rename = "sd_C")]
    pub sd_c: f64,
}

/// Sample mean and standard deviation (divisor `n - 1`; zero for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Off-diagonal upper-triangle entries of a synchronous matrix.
pub fn distinct_pairs(c: &CorrMatrix) -> Vec<f64> {
    let n = c.n();
    (0..n)
        .flat_map(|m| (m + 1..n).map(move |k| (m, k)))
        .map(|(m, k)| c.get(m, k))
        .collect()
}

pub fn summarize(period: &str, panel: &ReturnPanel, split: &LagSplit) -> Result<SummaryRow> {
    if panel.n_symbols() < 2 {
        return Err(Error::Data("summary needs at least two symbols".into()));
    }
    let sync = sync_corr(panel)?;
    let lagged = lagged_corr(split)?;
    let (mean_rho, sd_rho) = mean_sd(&distinct_pairs(&sync));
    let (mean_c, sd_c) = mean_sd(lagged.values.as_slice().expect("fresh matrix is contiguous"));
    Ok(SummaryRow {
        period: period.to_string(),
        rows: split.rows(),
        horizon_minutes: split.horizon_minutes,
        mean_rho,
        sd_rho,
        mean_c,
        sd_c,
    })
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["period", "T", "h", "mean_rho", "sd_rho", "mean_C", "sd_C"])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EppsPoint {
    pub h: u32,
    /// Mean synchronous coefficient over distinct pairs.
    pub mean: f64,
    /// Standard deviation of those coefficients.
    pub sd: f64,
    /// `sd / sqrt(pairs)`.
    pub se: f64,
}

/// One point per panel, in the order given.
pub fn epps_curve(panels: &[ReturnPanel]) -> Result<Vec<EppsPoint>> {
    if panels.len() < 2 {
        return Err(Error::Config("an Epps curve needs at least two horizons".into()));
    }
    panels
        .iter()
        .map(|p| {
            if p.n_symbols() < 2 {
                return Err(Error::Data("Epps curve needs at least two symbols".into()));
            }
            let pairs = distinct_pairs(&sync_corr(p)?);
            let (mean, sd) = mean_sd(&pairs);
            Ok(EppsPoint {
                h: p.horizon_minutes(),
                mean,
                sd,
                se: sd / (pairs.len() as f64).sqrt(),
            })
        })
        .collect()
}

/// CSV `h,mean,sd,se`.
pub fn write_epps_csv<W: Write>(points: &[EppsPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h", "mean", "sd", "se"])?;
    for p in points {
        w.write_record([
            p.h.to_string(),
            p.mean.to_string(),
            p.sd.to_string(),
            p.se.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
