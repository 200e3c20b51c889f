//! Intraday log-return panel and its lag-filtered leader/follower split.

use std::io::{Read, Write};

use chrono::NaiveDate;
use ndarray::{s, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::ingest::{PriceGrid, SESSION_MINUTES};

/// Day-structured matrix of log-returns, one column per symbol.
///
/// Rows are ordered by `(day, slot)` with `390 / h` slots per day.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    symbols: Vec<String>,
    horizon_minutes: u32,
    days: Vec<NaiveDate>,
    values: Array2<f64>,
}

impl ReturnPanel {
    pub fn new(
        symbols: Vec<String>,
        horizon_minutes: u32,
        days: Vec<NaiveDate>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if horizon_minutes == 0 || SESSION_MINUTES % horizon_minutes != 0 {
            return Err(Error::Config(format!(
                "horizon {horizon_minutes} min does not divide the session"
            )));
        }
        let slots = (SESSION_MINUTES / horizon_minutes) as usize;
        if values.nrows() != days.len() * slots {
            return Err(Error::Data(format!(
                "panel has {} rows, expected {} days x {slots} slots",
                values.nrows(),
                days.len()
            )));
        }
        if values.ncols() != symbols.len() {
            return Err(Error::Data(format!(
                "panel has {} columns for {} symbols",
                values.ncols(),
                symbols.len()
            )));
        }
        if let Some(((row, col), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite return {v} for {} at row {row}",
                symbols[col]
            )));
        }
        Ok(ReturnPanel {
            symbols,
            horizon_minutes,
            days,
            values,
        })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn horizon_minutes(&self) -> u32 {
        self.horizon_minutes
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn slots_per_day(&self) -> usize {
        (SESSION_MINUTES / self.horizon_minutes) as usize
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Row index at which each trading day starts.
    pub fn day_boundaries(&self) -> Vec<usize> {
        (0..self.days.len()).map(|d| d * self.slots_per_day()).collect()
    }

    pub fn column(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.column(n)
    }

    /// Keeps only the days in `range`.
    pub fn select_days(&self, range: std::ops::Range<usize>) -> ReturnPanel {
        let k = self.slots_per_day();
        ReturnPanel {
            symbols: self.symbols.clone(),
            horizon_minutes: self.horizon_minutes,
            days: self.days[range.clone()].to_vec(),
            values: self.values.slice(s![range.start * k..range.end * k, ..]).to_owned(),
        }
    }

    /// Aggregates consecutive slots into a coarser horizon by summing
    /// log-returns.
    pub fn coarsen(&self, horizon_minutes: u32) -> Result<ReturnPanel> {
        if horizon_minutes % self.horizon_minutes != 0 {
            return Err(Error::Config(format!(
                "cannot coarsen {}-minute returns to {horizon_minutes} minutes",
                self.horizon_minutes
            )));
        }
        let factor = (horizon_minutes / self.horizon_minutes) as usize;
        let fine = self.slots_per_day();
        if fine % factor != 0 {
            return Err(Error::Config(format!(
                "horizon {horizon_minutes} min does not divide the session"
            )));
        }
        let rows = self.rows() / factor;
        let mut values = Array2::zeros((rows, self.n_symbols()));
        for (i, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
            let block = self.values.slice(s![i * factor..(i + 1) * factor, ..]);
            row.assign(&block.sum_axis(Axis(0)));
        }
        ReturnPanel::new(self.symbols.clone(), horizon_minutes, self.days.clone(), values)
    }

    /// CSV with header `date,slot,<symbol>...`, one row per `(day, slot)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string(), "slot".to_string()];
        header.extend(self.symbols.iter().cloned());
        w.write_record(&header)?;
        let k = self.slots_per_day();
        for (i, row) in self.values.axis_iter(Axis(0)).enumerate() {
            let mut rec = Vec::with_capacity(row.len() + 2);
            rec.push(self.days[i / k].format("%Y-%m-%d").to_string());
            rec.push((i % k).to_string());
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<ReturnPanel> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let header = reader.headers()?.clone();
        if header.len() < 3 || &header[0] != "date" || &header[1] != "slot" {
            return Err(Error::Data(
                "return panel header must be `date,slot,<symbols>`".into(),
            ));
        }
        let symbols: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut days: Vec<NaiveDate> = Vec::new();
        let mut flat = Vec::new();
        let mut per_day = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let day = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|_| Error::Data(format!("panel line {line}: bad date")))?;
            let slot: usize = rec[1]
                .parse()
                .map_err(|_| Error::Data(format!("panel line {line}: bad slot")))?;
            if days.last() != Some(&day) {
                days.push(day);
                per_day.push(0usize);
            }
            let count = per_day.last_mut().expect("day pushed above");
            if slot != *count {
                return Err(Error::Data(format!("panel line {line}: slot out of order")));
            }
            *count += 1;
            for v in rec.iter().skip(2) {
                flat.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::Data(format!("panel line {line}: bad value `{v}`")))?,
                );
            }
        }
        let slots = *per_day
            .first()
            .ok_or_else(|| Error::Data("empty return panel".into()))?;
        if per_day.iter().any(|&c| c != slots) || SESSION_MINUTES as usize % slots != 0 {
            return Err(Error::Data("panel days have inconsistent slot counts".into()));
        }
        let h = SESSION_MINUTES / slots as u32;
        let values = Array2::from_shape_vec((days.len() * slots, symbols.len()), flat)
            .map_err(|e| Error::Data(format!("panel shape: {e}")))?;
        ReturnPanel::new(symbols, h, days, values)
    }
}

/// `r_t = ln p(t) - ln p(t - h)` for every intraday slot; no overnight returns.
pub fn compute_returns(grid: &PriceGrid) -> Result<ReturnPanel> {
    let slots = (SESSION_MINUTES / grid.horizon_minutes) as usize;
    let n = grid.symbols.len();
    let mut values = Array2::zeros((grid.days.len() * slots, n));
    for s in 0..n {
        for (d, day) in grid.days.iter().enumerate() {
            let prices = grid.day_prices(s, d);
            if let Some(&bad) = prices.iter().find(|p| !(**p > 0.0)) {
                return Err(Error::NonPositivePrice {
                    symbol: grid.symbols[s].clone(),
                    day: day.to_string(),
                    price: bad,
                });
            }
            for j in 0..slots {
                values[[d * slots + j, s]] = prices[j + 1].ln() - prices[j].ln();
            }
        }
    }
    ReturnPanel::new(grid.symbols.clone(), grid.horizon_minutes, grid.days.clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Leader,
    Follower,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Leader => "leader",
            Side::Follower => "follower",
        }
    }
}

/// Leader matrix A and follower matrix B for a lag of `l` slots.
///
/// Row `i` of both matrices comes from the same day, with B's slot exactly
/// `l` slots after A's.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSplit {
    pub symbols: Vec<String>,
    pub horizon_minutes: u32,
    pub lag: usize,
    pub leader: Array2<f64>,
    pub follower: Array2<f64>,
    /// Constant columns found while splitting.
    pub zero_variance: Vec<(Side, usize)>,
}

impl LagSplit {
    pub fn rows(&self) -> usize {
        self.leader.nrows()
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    /// Rows `range` of both matrices, re-checking for constant columns.
    pub fn select_rows(&self, range: std::ops::Range<usize>) -> LagSplit {
        let leader = self.leader.slice(s![range.clone(), ..]).to_owned();
        let follower = self.follower.slice(s![range, ..]).to_owned();
        let zero_variance = constant_columns(&leader, &follower);
        LagSplit {
            symbols: self.symbols.clone(),
            horizon_minutes: self.horizon_minutes,
            lag: self.lag,
            leader,
            follower,
            zero_variance,
        }
    }

    pub fn ensure_nondegenerate(&self) -> Result<()> {
        match self.zero_variance.first() {
            Some(&(side, col)) => Err(Error::ZeroVariance {
                symbol: self.symbols[col].clone(),
                side: side.as_str(),
            }),
            None => Ok(()),
        }
    }
}

/// Number of aligned rows a lag-`l` split produces.
pub fn lagged_rows(days: usize, h: u32, l: usize) -> usize {
    days * ((SESSION_MINUTES / h) as usize).saturating_sub(l)
}

pub fn split_lagged(panel: &ReturnPanel, l: usize) -> Result<LagSplit> {
    let slots = panel.slots_per_day();
    if l == 0 {
        return Err(Error::Config("lag must be at least 1".into()));
    }
    if l >= slots {
        return Err(Error::LagTooLarge { lag: l, slots });
    }
    let per_day = slots - l;
    let n = panel.n_symbols();
    let rows = panel.days.len() * per_day;
    let mut leader = Array2::zeros((rows, n));
    let mut follower = Array2::zeros((rows, n));
    for d in 0..panel.days.len() {
        let base = d * slots;
        let out = d * per_day;
        leader
            .slice_mut(s![out..out + per_day, ..])
            .assign(&panel.values.slice(s![base..base + per_day, ..]));
        follower
            .slice_mut(s![out..out + per_day, ..])
            .assign(&panel.values.slice(s![base + l..base + slots, ..]));
    }
    let zero_variance = constant_columns(&leader, &follower);
    Ok(LagSplit {
        symbols: panel.symbols.clone(),
        horizon_minutes: panel.horizon_minutes,
        lag: l,
        leader,
        follower,
        zero_variance,
    })
}

fn constant_columns(leader: &Array2<f64>, follower: &Array2<f64>) -> Vec<(Side, usize)> {
    let mut out = Vec::new();
    for (side, m) in [(Side::Leader, leader), (Side::Follower, follower)] {
        for (j, col) in m.axis_iter(Axis(1)).enumerate() {
            let first = col.first().copied();
            if col.iter().all(|v| Some(*v) == first) {
                out.push((side, j));
            }
        }
    }
    out
}
