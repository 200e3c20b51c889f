//! Tick ingestion and last-price sampling on a session grid.
//!
//! Input is a CSV stream with the exact header `symbol,date,seconds,price`,
//! where `seconds` counts from the session open (0..=23400). Rows that break
//! an invariant are rejected with a line-numbered [`Diagnostic`] and parsing
//! carries on.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const SESSION_MINUTES: u32 = 390;
pub const SESSION_SECONDS: u32 = SESSION_MINUTES * 60;

pub const TICK_HEADER: [&str; 4] = ["symbol", "date", "seconds", "price"];
pub const GRID_HEADER: [&str; 4] = ["symbol", "date", "offset_minutes", "price"];

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub symbol: String,
    pub day: NaiveDate,
    /// Seconds since the session open.
    pub offset: u32,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Row dropped.
    Rejected,
    /// Row kept after an adjustment.
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Rejected => "rejected",
            Severity::Warning => "warning",
        };
        write!(f, "line {}: {}: {}", self.line, tag, self.message)
    }
}

/// Parsed ticks grouped per symbol, each sorted by `(day, offset)`.
#[derive(Debug, Clone, Default)]
pub struct ParsedTicks {
    pub series: BTreeMap<String, Vec<TickRecord>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedTicks {
    pub fn rejected(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Rejected)
    }
}

pub fn parse_ticks<R: Read>(input: R) -> Result<ParsedTicks> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input);

    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != TICK_HEADER {
        return Err(Error::Data(format!(
            "tick header must be `{}`, found `{}`",
            TICK_HEADER.join(","),
            found.join(",")
        )));
    }

    let mut out = ParsedTicks::default();
    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.diagnostics.push(Diagnostic {
                    line,
                    severity: Severity::Rejected,
                    message: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        match parse_row(&record) {
            Ok((tick, warning)) => {
                if let Some(message) = warning {
                    out.diagnostics.push(Diagnostic {
                        line,
                        severity: Severity::Warning,
                        message,
                    });
                }
                out.series.entry(tick.symbol.clone()).or_default().push(tick);
            }
            Err(message) => out.diagnostics.push(Diagnostic {
                line,
                severity: Severity::Rejected,
                message,
            }),
        }
    }

    for ticks in out.series.values_mut() {
        // stable: same-second trades keep input order
        ticks.sort_by_key(|t| (t.day, t.offset));
    }
    Ok(out)
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<(TickRecord, Option<String>), String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, found {}", record.len()));
    }
    let symbol = record[0].trim();
    if symbol.is_empty() {
        return Err("empty symbol".into());
    }
    let day = NaiveDate::parse_from_str(record[1].trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date `{}`: {e}", &record[1]))?;

    let raw_seconds = record[2].trim();
    let mut warning = None;
    let offset = match raw_seconds.parse::<u32>() {
        Ok(s) => s,
        Err(_) => {
            let s: f64 = raw_seconds
                .parse()
                .map_err(|_| format!("bad seconds `{raw_seconds}`"))?;
            if !s.is_finite() || s < 0.0 {
                return Err(format!("seconds {raw_seconds} is not a non-negative number"));
            }
            if s > u32::MAX as f64 {
                return Err(format!("seconds {raw_seconds} outside [0, {SESSION_SECONDS}]"));
            }
            let truncated = s.trunc() as u32;
            if truncated as f64 != s {
                warning = Some(format!(
                    "sub-second timestamp {raw_seconds} truncated to {truncated}"
                ));
            }
            truncated
        }
    };
    if offset > SESSION_SECONDS {
        return Err(format!("seconds {offset} outside [0, {SESSION_SECONDS}]"));
    }

    let price: f64 = record[3]
        .trim()
        .parse()
        .map_err(|_| format!("bad price `{}`", &record[3]))?;
    if !price.is_finite() || price <= 0.0 {
        return Err(format!("non-positive price {}", &record[3]));
    }

    Ok((
        TickRecord {
            symbol: symbol.to_string(),
            day,
            offset,
            price,
        },
        warning,
    ))
}

pub fn write_ticks_csv<W: Write>(out: W, ticks: &[TickRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TICK_HEADER)?;
    for t in ticks {
        w.write_record([
            t.symbol.clone(),
            t.day.format("%Y-%m-%d").to_string(),
            t.offset.to_string(),
            t.price.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionCalendar {
    trading_days: Vec<NaiveDate>,
    session_minutes: u32,
}

impl SessionCalendar {
    pub fn new(trading_days: Vec<NaiveDate>) -> Result<Self> {
        if trading_days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("trading days must be strictly increasing".into()));
        }
        Ok(SessionCalendar {
            trading_days,
            session_minutes: SESSION_MINUTES,
        })
    }

    /// Every day on which any symbol traded.
    pub fn from_ticks(series: &BTreeMap<String, Vec<TickRecord>>) -> Self {
        let mut days: Vec<NaiveDate> = series.values().flatten().map(|t| t.day).collect();
        days.sort_unstable();
        days.dedup();
        SessionCalendar {
            trading_days: days,
            session_minutes: SESSION_MINUTES,
        }
    }

    pub fn trading_days(&self) -> &[NaiveDate] {
        &self.trading_days
    }

    pub fn session_minutes(&self) -> u32 {
        self.session_minutes
    }

    pub fn check_horizon(&self, h: u32) -> Result<()> {
        if h == 0 || self.session_minutes % h != 0 {
            return Err(Error::Config(format!(
                "horizon {h} min does not divide the {} minute session",
                self.session_minutes
            )));
        }
        Ok(())
    }
}

/// Last-price-at-or-before grid, one row of `390/h + 1` prices per symbol-day.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGrid {
    pub symbols: Vec<String>,
    pub days: Vec<NaiveDate>,
    pub horizon_minutes: u32,
    /// `prices[s]` holds symbol `s` with days laid out consecutively.
    pub prices: Vec<Vec<f64>>,
}

impl PriceGrid {
    pub fn points_per_day(&self) -> usize {
        (SESSION_MINUTES / self.horizon_minutes) as usize + 1
    }

    pub fn day_prices(&self, symbol: usize, day: usize) -> &[f64] {
        let k = self.points_per_day();
        &self.prices[symbol][day * k..(day + 1) * k]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(GRID_HEADER)?;
        for (s, symbol) in self.symbols.iter().enumerate() {
            for (d, day) in self.days.iter().enumerate() {
                let date = day.format("%Y-%m-%d").to_string();
                for (j, p) in self.day_prices(s, d).iter().enumerate() {
                    let minutes = j as u32 * self.horizon_minutes;
                    w.write_record([symbol, &date, &minutes.to_string(), &p.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != GRID_HEADER {
            return Err(Error::Data(format!(
                "grid header must be `{}`",
                GRID_HEADER.join(",")
            )));
        }
        let mut rows: BTreeMap<(usize, NaiveDate), Vec<(u32, f64)>> = BTreeMap::new();
        let mut symbols: Vec<String> = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |what: &str| Error::Data(format!("grid line {line}: bad {what}"));
            let sym = rec.get(0).ok_or_else(|| bad("symbol"))?;
            let idx = match symbols.iter().position(|s| s == sym) {
                Some(i) => i,
                None => {
                    symbols.push(sym.to_string());
                    symbols.len() - 1
                }
            };
            let day = NaiveDate::parse_from_str(rec.get(1).unwrap_or(""), "%Y-%m-%d")
                .map_err(|_| bad("date"))?;
            let minutes: u32 = rec.get(2).unwrap_or("").parse().map_err(|_| bad("offset"))?;
            let price: f64 = rec.get(3).unwrap_or("").parse().map_err(|_| bad("price"))?;
            if !(price > 0.0) {
                return Err(bad("price"));
            }
            rows.entry((idx, day)).or_default().push((minutes, price));
        }
        let first = rows
            .values()
            .next()
            .ok_or_else(|| Error::Data("empty price grid".into()))?;
        if first.len() < 2 {
            return Err(Error::Data("grid day with fewer than two points".into()));
        }
        let h = first[1].0 - first[0].0;
        if h == 0 || SESSION_MINUTES % h != 0 {
            return Err(Error::Data(format!("grid horizon {h} does not divide the session")));
        }
        let k = (SESSION_MINUTES / h) as usize + 1;
        let mut days: Vec<NaiveDate> = rows.keys().map(|(_, d)| *d).collect();
        days.sort_unstable();
        days.dedup();

        let mut prices = vec![Vec::with_capacity(days.len() * k); symbols.len()];
        for (s, series) in prices.iter_mut().enumerate() {
            for day in &days {
                let pts = rows.get(&(s, *day)).ok_or_else(|| {
                    Error::Data(format!("grid misses {} on {day}", symbols[s]))
                })?;
                let expected = (0..k as u32).map(|j| j * h);
                if pts.len() != k || !pts.iter().map(|p| p.0).eq(expected) {
                    return Err(Error::Data(format!(
                        "grid day {day} for {} is not a full {h}-minute grid",
                        symbols[s]
                    )));
                }
                series.extend(pts.iter().map(|p| p.1));
            }
        }
        Ok(PriceGrid {
            symbols,
            days,
            horizon_minutes: h,
            prices,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GridSampling {
    pub grid: PriceGrid,
    /// One entry per excluded symbol.
    pub warnings: Vec<String>,
}

/// Samples every symbol on the `h`-minute grid of each calendar day.
///
/// `p(t)` is the last trade at or before `t` within the same day; grid times
/// before the day's first trade take the first trade's price. A symbol with
/// no trade on some calendar day is dropped and reported in `warnings`.
pub fn sample_prices(
    ticks: &BTreeMap<String, Vec<TickRecord>>,
    h: u32,
    calendar: &SessionCalendar,
) -> Result<GridSampling> {
    calendar.check_horizon(h)?;
    let days = calendar.trading_days();
    if days.is_empty() {
        return Err(Error::Data("calendar has no trading days".into()));
    }
    let step = h * 60;
    let points = (SESSION_MINUTES / h) as usize + 1;

    let sampled: Vec<(String, std::result::Result<Vec<f64>, String>)> = ticks
        .par_iter()
        .map(|(symbol, recs)| {
            let mut series = Vec::with_capacity(days.len() * points);
            let mut missing = Vec::new();
            for day in days {
                let start = recs.partition_point(|t| t.day < *day);
                let end = recs.partition_point(|t| t.day <= *day);
                let day_recs = &recs[start..end];
                if day_recs.is_empty() {
                    missing.push(day.to_string());
                    continue;
                }
                let mut idx = 0;
                for j in 0..points {
                    let t = j as u32 * step;
                    while idx < day_recs.len() && day_recs[idx].offset <= t {
                        idx += 1;
                    }
                    let price = if idx == 0 {
                        day_recs[0].price
                    } else {
                        day_recs[idx - 1].price
                    };
                    series.push(price);
                }
            }
            let res = if missing.is_empty() {
                Ok(series)
            } else {
                Err(format!(
                    "symbol {symbol} excluded: no trades on {}",
                    missing.join(", ")
                ))
            };
            (symbol.clone(), res)
        })
        .collect();

    let mut grid = PriceGrid {
        symbols: Vec::new(),
        days: days.to_vec(),
        horizon_minutes: h,
        prices: Vec::new(),
    };
    let mut warnings = Vec::new();
    for (symbol, res) in sampled {
        match res {
            Ok(series) => {
                grid.symbols.push(symbol);
                grid.prices.push(series);
            }
            Err(w) => {
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    Ok(GridSampling { grid, warnings })
}
