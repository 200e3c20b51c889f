//! Lagged and synchronous Pearson correlation matrices.
//!
//! Columns are turned into z-scores once (divisor `T - 1`) and every
//! correlation is a scaled inner product of two z-score columns. The
//! permutation engine reuses [`standardize`] and [`cross_product`] verbatim,
//! so an unpermuted replicate reproduces the empirical products bit for bit.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::returns::{LagSplit, ReturnPanel, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrKind {
    /// `C[m][n]` pairs leader `m` with follower `n`.
    Lagged,
    Synchronous,
}

impl CorrKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrKind::Lagged => "lagged",
            CorrKind::Synchronous => "synchronous",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    pub symbols: Vec<String>,
    pub kind: CorrKind,
    pub horizon_minutes: u32,
    /// Zero for synchronous matrices.
    pub lag: usize,
    /// Number of observations `T` behind each coefficient.
    pub rows: usize,
    pub values: Array2<f64>,
}

impl CorrMatrix {
    pub fn n(&self) -> usize {
        self.symbols.len()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[[m, n]]
    }

    /// CSV with a symbol header row and a symbol first column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["symbol".to_string()];
        header.extend(self.symbols.iter().cloned());
        w.write_record(&header)?;
        for (sym, row) in self.symbols.iter().zip(self.values.axis_iter(Axis(0))) {
            let mut rec = vec![sym.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = self
            .values
            .axis_iter(Axis(0))
            .map(|r| r.to_vec())
            .collect();
        serde_json::json!({
            "symbols": self.symbols,
            "kind": self.kind.as_str(),
            "horizon_minutes": self.horizon_minutes,
            "lag": self.lag,
            "T": self.rows,
            "values": rows,
        })
    }
}

/// Column z-scores with sample standard deviation (divisor `T - 1`).
///
/// The result is row-major whatever the input layout. Returns the index of
/// the first constant column as the error.
pub fn standardize(m: ArrayView2<'_, f64>) -> std::result::Result<Array2<f64>, usize> {
    let t = m.nrows();
    let mut z = m.as_standard_layout().into_owned();
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let mean = pairwise_sum(col.iter().copied()) / t as f64;
        // second pass with the rounding-error correction term
        let (mut ss, mut corr) = (0.0, 0.0);
        for v in col.iter() {
            let d = v - mean;
            ss += d * d;
            corr += d;
        }
        let var = (ss - corr * corr / t as f64) / (t as f64 - 1.0);
        if !(var > 0.0) || col.iter().all(|v| *v == col[0]) {
            return Err(j);
        }
        let sd = var.sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    Ok(z)
}

fn pairwise_sum(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    fn go(v: &[f64]) -> f64 {
        if v.len() <= 64 {
            v.iter().sum()
        } else {
            let (a, b) = v.split_at(v.len() / 2);
            go(a) + go(b)
        }
    }
    go(&v)
}

/// `a^T b` for two `T x _` matrices.
pub fn cross_product(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    a.t().dot(&b)
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Standardized leader and follower matrices for a split.
pub(crate) fn standardize_split(split: &LagSplit) -> Result<(Array2<f64>, Array2<f64>)> {
    split.ensure_nondegenerate()?;
    if split.rows() < 3 {
        return Err(Error::Data(format!(
            "need at least 3 aligned rows, have {}",
            split.rows()
        )));
    }
    let za = standardize(split.leader.view()).map_err(|j| Error::ZeroVariance {
        symbol: split.symbols[j].clone(),
        side: Side::Leader.as_str(),
    })?;
    let zb = standardize(split.follower.view()).map_err(|j| Error::ZeroVariance {
        symbol: split.symbols[j].clone(),
        side: Side::Follower.as_str(),
    })?;
    Ok((za, zb))
}

pub(crate) fn standardize_panel(panel: &ReturnPanel) -> Result<Array2<f64>> {
    if panel.rows() < 3 {
        return Err(Error::Data(format!(
            "need at least 3 return rows, have {}",
            panel.rows()
        )));
    }
    standardize(panel.values().view()).map_err(|j| Error::ZeroVariance {
        symbol: panel.symbols()[j].clone(),
        side: "panel",
    })
}

/// Lagged correlation `C[m][n]` between leader column `m` of A and follower
/// column `n` of B.
pub fn lagged_corr(split: &LagSplit) -> Result<CorrMatrix> {
    let (za, zb) = standardize_split(split)?;
    let scale = 1.0 / (split.rows() as f64 - 1.0);
    let values = cross_product(za.view(), zb.view()).mapv(|v| clamp_unit(v * scale));
    Ok(CorrMatrix {
        symbols: split.symbols.clone(),
        kind: CorrKind::Lagged,
        horizon_minutes: split.horizon_minutes,
        lag: split.lag,
        rows: split.rows(),
        values,
    })
}

/// Synchronous correlation between the unfiltered columns of R.
pub fn sync_corr(panel: &ReturnPanel) -> Result<CorrMatrix> {
    let z = standardize_panel(panel)?;
    let scale = 1.0 / (panel.rows() as f64 - 1.0);
    let mut values = cross_product(z.view(), z.view()).mapv(|v| clamp_unit(v * scale));
    let n = values.nrows();
    for m in 0..n {
        values[[m, m]] = 1.0;
        for k in m + 1..n {
            values[[k, m]] = values[[m, k]];
        }
    }
    Ok(CorrMatrix {
        symbols: panel.symbols().to_vec(),
        kind: CorrKind::Synchronous,
        horizon_minutes: panel.horizon_minutes(),
        lag: 0,
        rows: panel.rows(),
        values,
    })
}
