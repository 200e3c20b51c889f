//! Synthetic return panels and tick streams with known structure.
//!
//! Planted model, per intraday slot `t` and symbol `i`:
//!
//! ```text
//! r[i][t] = beta[i] f[t] + noise e[i][t] + sum over edges j -> i of c e'[j][t - lag]
//! ```
//!
//! where `f` and `e` are independent standard normals and `e' = noise e`
//! is the leader's idiosyncratic shock. Each day starts with fresh pre-open
//! shocks so lagged terms never reach across days. Every return is a linear
//! combination of independent shocks, so population correlations follow in
//! closed form from the weights.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{TickRecord, SESSION_MINUTES, SESSION_SECONDS};
use crate::returns::ReturnPanel;

const SHOCK_STREAM: u64 = 0;
const FACTOR_STREAM: u64 = 1;
const TRADE_STREAM: u64 = 2;

/// Symbol names `S00`, `S01`, ... padded to a common width.
pub fn synthetic_symbols(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("S{i:0width$}")).collect()
}

/// `count` consecutive weekdays from 2024-01-02.
pub fn weekdays(count: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2024, 1, 2).expect("valid date");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn slots_for(h: u32) -> Result<usize> {
    if h == 0 || SESSION_MINUTES % h != 0 {
        return Err(Error::Config(format!("horizon {h} min does not divide the session")));
    }
    Ok((SESSION_MINUTES / h) as usize)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// I.i.d. standard normal returns for `n` symbols over `days` weekdays.
pub fn gen_null(n: usize, days: usize, h: u32, seed: u64) -> Result<ReturnPanel> {
    let slots = slots_for(h)?;
    if n == 0 || days == 0 {
        return Err(Error::Config("null panel needs at least one symbol and one day".into()));
    }
    let mut rng = stream(seed, SHOCK_STREAM);
    let values = Array2::from_shape_simple_fn((days * slots, n), || StandardNormal.sample(&mut rng));
    ReturnPanel::new(synthetic_symbols(n), h, weekdays(days), values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub leader: usize,
    pub follower: usize,
    /// Lag in intraday slots, at least 1.
    pub lag: usize,
    pub coefficient: f64,
}

/// Schema of a planted-model spec file (TOML):
///
/// ```toml
/// n = 10
/// seed = 7
/// noise = 1.0              # optional, default 1
/// betas = [0.3, 0.3, ...]  # optional, default all zero; n entries
///
/// [[edges]]
/// leader = 0
/// follower = 1
/// lag = 1
/// coefficient = 0.1005
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub n: usize,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub edges: Vec<PlantedEdge>,
    #[serde(default = "unit")]
    pub noise: f64,
    pub seed: u64,
}

fn unit() -> f64 {
    1.0
}

impl PlantedSpec {
    /// A spec with no factor and no edges.
    pub fn null(n: usize, seed: u64) -> Self {
        PlantedSpec {
            n,
            betas: Vec::new(),
            edges: Vec::new(),
            noise: 1.0,
            seed,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: PlantedSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("planted spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("planted spec needs at least one symbol".into());
        }
        if !self.betas.is_empty() && self.betas.len() != self.n {
            return bad(format!("{} betas for {} symbols", self.betas.len(), self.n));
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return bad("betas must be finite".into());
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad(format!("noise scale must be positive, got {}", self.noise));
        }
        for e in &self.edges {
            if e.leader >= self.n || e.follower >= self.n {
                return bad(format!("edge {} -> {} names a missing symbol", e.leader, e.follower));
            }
            if e.lag == 0 {
                return bad("planted lags must be at least one slot".into());
            }
            if !(e.coefficient.abs() < 1.0) {
                return bad(format!("planted coefficient {} outside (-1, 1)", e.coefficient));
            }
        }
        Ok(())
    }

    fn beta(&self, i: usize) -> f64 {
        self.betas.get(i).copied().unwrap_or(0.0)
    }

    fn max_lag(&self) -> usize {
        self.edges.iter().map(|e| e.lag).max().unwrap_or(0)
    }

    /// `weights[i]` maps `(shock symbol, delay)` to its weight in `r[i]`.
    fn weights(&self) -> Vec<BTreeMap<(usize, usize), f64>> {
        let mut w = vec![BTreeMap::new(); self.n];
        for (i, wi) in w.iter_mut().enumerate() {
            wi.insert((i, 0), self.noise);
        }
        for e in &self.edges {
            *w[e.follower].entry((e.leader, e.lag)).or_insert(0.0) += e.coefficient * self.noise;
        }
        w
    }

    /// Population correlation between `r[a][t]` and `r[b][t + lag]`.
    pub fn population_corr(&self, a: usize, b: usize, lag: usize) -> f64 {
        let w = self.weights();
        let var = |i: usize| self.beta(i).powi(2) + w[i].values().map(|x| x * x).sum::<f64>();
        let mut cov = if lag == 0 { self.beta(a) * self.beta(b) } else { 0.0 };
        for (&(k, d), &x) in &w[a] {
            if let Some(y) = w[b].get(&(k, d + lag)) {
                cov += x * y;
            }
        }
        cov / (var(a) * var(b)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCorr {
    pub leader: usize,
    pub follower: usize,
    pub lag: usize,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct PlantedPanel {
    pub panel: ReturnPanel,
    /// Closed-form lagged correlation of each planted edge.
    pub population: Vec<PopulationCorr>,
}

/// Draws a panel from the planted model.
///
/// With no edges, zero betas and unit noise the output equals
/// [`gen_null`] with the same seed, bit for bit.
pub fn gen_planted(spec: &PlantedSpec, days: usize, h: u32) -> Result<PlantedPanel> {
    spec.validate()?;
    let slots = slots_for(h)?;
    if days == 0 {
        return Err(Error::Config("planted panel needs at least one day".into()));
    }
    let n = spec.n;
    let burn = spec.max_lag();
    let mut shocks_rng = stream(spec.seed, SHOCK_STREAM);
    let mut factor_rng = stream(spec.seed, FACTOR_STREAM);
    let has_factor = spec.betas.iter().any(|&b| b != 0.0);
    let mut values = Array2::zeros((days * slots, n));
    // per-day shock buffer: pre-open rows first, then the session
    let mut shocks = Array2::<f64>::zeros((burn + slots, n));
    for day in 0..days {
        for t in 0..burn {
            for i in 0..n {
                shocks[[t, i]] = StandardNormal.sample(&mut shocks_rng);
            }
        }
        for t in 0..slots {
            let row = day * slots + t;
            let f: f64 = if has_factor {
                StandardNormal.sample(&mut factor_rng)
            } else {
                0.0
            };
            for i in 0..n {
                let e: f64 = StandardNormal.sample(&mut shocks_rng);
                shocks[[burn + t, i]] = e;
                values[[row, i]] = spec.beta(i) * f + spec.noise * e;
            }
            for edge in &spec.edges {
                let lead = shocks[[burn + t - edge.lag, edge.leader]];
                values[[row, edge.follower]] += edge.coefficient * spec.noise * lead;
            }
        }
    }
    let population = spec
        .edges
        .iter()
        .map(|e| PopulationCorr {
            leader: e.leader,
            follower: e.follower,
            lag: e.lag,
            rho: spec.population_corr(e.leader, e.follower, e.lag),
        })
        .collect();
    Ok(PlantedPanel {
        panel: ReturnPanel::new(synthetic_symbols(n), h, weekdays(days), values)?,
        population,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TradeRate {
    /// A trade in every second of the session, open and close included.
    EverySecond,
    /// Poisson arrivals with this many trades per second on average; a
    /// second holds a trade when at least one arrival falls in it.
    Poisson(f64),
}

#[derive(Debug, Clone)]
pub struct TickSpec {
    pub rate: TradeRate,
    /// Opening price of the first day.
    pub start_price: f64,
    /// `(symbol index, day index)` pairs with no trades at all.
    pub silent: Vec<(usize, usize)>,
    pub seed: u64,
}

/// Ticks on a latent path that matches the panel at every grid time and
/// moves linearly in log price between grid times. Each day opens at the
/// previous day's close.
pub fn gen_ticks(panel: &ReturnPanel, spec: &TickSpec) -> Result<Vec<TickRecord>> {
    if !(spec.start_price > 0.0 && spec.start_price.is_finite()) {
        return Err(Error::Config("start price must be positive".into()));
    }
    let threshold = match spec.rate {
        TradeRate::EverySecond => 1.0,
        TradeRate::Poisson(lambda) if lambda > 0.0 && lambda.is_finite() => -(-lambda).exp_m1(),
        TradeRate::Poisson(lambda) => {
            return Err(Error::Config(format!("trade rate must be positive, got {lambda}")))
        }
    };
    let slots = panel.slots_per_day();
    let step = panel.horizon_minutes() * 60;
    let values = panel.values();
    let mut rng = stream(spec.seed, TRADE_STREAM);
    let mut out = Vec::new();
    for (i, symbol) in panel.symbols().iter().enumerate() {
        let mut log_price = spec.start_price.ln();
        for (d, &day) in panel.days().iter().enumerate() {
            // log price at the start of each slot, plus the close
            let mut anchors = Vec::with_capacity(slots + 1);
            anchors.push(log_price);
            for k in 0..slots {
                log_price += values[[d * slots + k, i]];
                anchors.push(log_price);
            }
            let silent = spec.silent.contains(&(i, d));
            for s in 0..=SESSION_SECONDS {
                // draw even when silent so other days are unaffected
                let trade = threshold >= 1.0 || rng.random::<f64>() < threshold;
                if trade && !silent {
                    let k = (s / step) as usize;
                    let within = s % step;
                    let lp = if within == 0 {
                        anchors[k]
                    } else {
                        let frac = f64::from(within) / f64::from(step);
                        anchors[k] + frac * (anchors[k + 1] - anchors[k])
                    };
                    out.push(TickRecord {
                        symbol: symbol.clone(),
                        day,
                        offset: s,
                        price: lp.exp(),
                    });
                }
            }
        }
    }
    Ok(out)
}
