//! Run configuration, provenance headers and the end-to-end commands behind
//! the `leadlag` binary.
//!
//! Every command computes all of its outputs in memory and writes them only
//! once nothing can fail any more, so an error never leaves a partial result
//! set behind. Each text output starts with `#` lines naming the code
//! version, the configuration hash and the seed; the readers in this crate
//! skip those lines.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{false_positive_prob, solve_threshold, FalsePositive};
use crate::corr::{lagged_corr, CorrKind};
use crate::epps::{epps_curve, summarize, write_epps_csv, write_summary_csv};
use crate::error::{Error, Result};
use crate::ingest::{parse_ticks, sample_prices, write_ticks_csv, PriceGrid, SessionCalendar};
use crate::permengine::{Checkpoint, Engine, PermData, PermPlan, RunOptions};
use crate::returns::{compute_returns, split_lagged, ReturnPanel};
use crate::synth::{gen_null, gen_planted, gen_ticks, PlantedSpec, TickSpec};
use crate::topology::{degree_profile, kde, motif_census, ranksum_test};
use crate::validate::{
    analytic_network, bonferroni_network, fdr_network, lag_sweep, segment_validate,
    write_lag_sweep_csv, Method, ValidatedNetwork,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Settings shared by `validate`, `report`, `lag-sweep` and `segment`.
///
/// Loaded from TOML; unknown keys are rejected. Fields that cannot change a
/// result (`output`, `workers`, `checkpoint_secs`, `resume`) are left out of
/// the echoed configuration and its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Tick CSV `symbol,date,seconds,price`.
    pub ticks: Option<PathBuf>,
    /// Return panel CSV `date,slot,<symbols>`, an alternative to `ticks`.
    pub returns: Option<PathBuf>,
    /// Horizons in minutes; each must divide the 390-minute session.
    pub horizons: Vec<u32>,
    pub lag: usize,
    pub q0: f64,
    /// Replicates per test: `Q = k N^2` unless `replicates` is set.
    pub k: u64,
    pub replicates: Option<u64>,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(with = "kind_name")]
    pub mode: CorrKind,
    #[serde(skip_serializing)]
    pub output: PathBuf,
    #[serde(skip_serializing)]
    pub workers: usize,
    #[serde(skip_serializing)]
    pub checkpoint_secs: Option<u64>,
    #[serde(skip_serializing)]
    pub resume: bool,
}

mod kind_name {
    use crate::corr::CorrKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &CorrKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(k.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CorrKind, D::Error> {
        match String::deserialize(d)?.as_str() {
            "lagged" => Ok(CorrKind::Lagged),
            "synchronous" | "sync" => Ok(CorrKind::Synchronous),
            other => Err(serde::de::Error::custom(format!(
                "mode must be `lagged` or `synchronous`, got `{other}`"
            ))),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ticks: None,
            returns: None,
            horizons: vec![5],
            lag: 1,
            q0: 0.01,
            k: 100,
            replicates: None,
            seed: 0,
            methods: vec![Method::Bonferroni, Method::Fdr],
            mode: CorrKind::Lagged,
            output: PathBuf::from("out"),
            workers: 0,
            checkpoint_secs: None,
            resume: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Checks every field, including that the input file exists.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let input = match (&self.ticks, &self.returns) {
            (Some(p), None) | (None, Some(p)) => p,
            _ => return cfg("set exactly one of `ticks` and `returns`".into()),
        };
        if self.horizons.is_empty() {
            return cfg("at least one horizon is required".into());
        }
        let mut seen = self.horizons.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.horizons.len() {
            return cfg("horizons must be distinct".into());
        }
        for &h in &self.horizons {
            if h == 0 || 390 % h != 0 {
                return cfg(format!("horizon {h} min does not divide the 390-minute session"));
            }
            if self.mode == CorrKind::Lagged {
                let slots = (390 / h) as usize;
                if self.lag >= slots {
                    return Err(Error::LagTooLarge {
                        lag: self.lag,
                        slots,
                    });
                }
            }
        }
        if self.mode == CorrKind::Lagged && self.lag == 0 {
            return cfg("lag must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.q0) {
            return cfg(format!("q0 must lie in [0, 1), got {}", self.q0));
        }
        if self.k == 0 || self.replicates == Some(0) {
            return cfg("replicate counts must be positive".into());
        }
        if self.methods.is_empty() {
            return cfg("select at least one validation method".into());
        }
        if self.checkpoint_secs == Some(0) {
            return cfg("checkpoint interval must be positive".into());
        }
        if !input.is_file() {
            return Err(Error::io(
                input,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
        Ok(())
    }

    pub fn replicates_for(&self, n: usize) -> u64 {
        self.replicates
            .unwrap_or(self.k * (n as u64) * (n as u64))
    }

    pub fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(
            command,
            serde_json::to_value(self).expect("config serializes"),
            Some(self.seed),
        )
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            workers: self.workers,
            checkpoint_every: self.checkpoint_secs.map(Duration::from_secs),
        }
    }
}

/// Who produced an output and from what settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub command: String,
    pub version: &'static str,
    /// First 16 hex digits of the SHA-256 of the compact JSON settings.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        let text = config.to_string();
        let digest = Sha256::digest(text.as_bytes());
        let config_hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Provenance {
            command: command.to_string(),
            version: VERSION,
            config_hash,
            seed,
            config,
        }
    }

    pub fn comment_lines(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# leadlag {} {}\n# config_hash {}\n# seed {seed}\n# config {}\n",
            self.version, self.command, self.config_hash, self.config
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "command": self.command,
            "version": self.version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "config": self.config,
        })
    }
}

/// Files assembled in memory and written together by [`Outputs::commit`].
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raw(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    /// CSV body preceded by the provenance comment lines.
    pub fn csv<F>(&mut self, rel: impl Into<PathBuf>, prov: &Provenance, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = prov.comment_lines().into_bytes();
        body(&mut buf)?;
        self.raw(rel, buf);
        Ok(())
    }

    /// JSON object with a `provenance` member added.
    pub fn json(&mut self, rel: impl Into<PathBuf>, prov: &Provenance, mut value: serde_json::Value) {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("provenance".into(), prov.to_json());
        }
        let mut text = serde_json::to_string_pretty(&value).expect("json serializes");
        text.push('\n');
        self.raw(rel, text.into_bytes());
    }

    pub fn graphml(&mut self, rel: impl Into<PathBuf>, prov: &Provenance, net: &ValidatedNetwork) -> Result<()> {
        let mut body = Vec::new();
        net.write_graphml(&mut body)?;
        let text = String::from_utf8(body).expect("graphml is utf-8");
        let (decl, rest) = text.split_once('\n').expect("graphml has a declaration line");
        let comment = prov.comment_lines().replace("--", "- -");
        let doc = format!("{decl}\n<!--\n{comment}-->\n{rest}");
        self.raw(rel, doc.into_bytes());
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file under `root`, each through a temporary sibling
    /// renamed into place. Returns the written paths.
    pub fn commit(self, root: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (rel, bytes) in self.files {
            let path = root.join(rel);
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Return panels at every configured horizon.
pub fn load_panels(cfg: &RunConfig) -> Result<Vec<ReturnPanel>> {
    if let Some(path) = &cfg.ticks {
        let parsed = parse_ticks(read_bytes(path)?.as_slice())?;
        for d in &parsed.diagnostics {
            log::warn!("{}: line {}: {}", path.display(), d.line, d.message);
        }
        let calendar = SessionCalendar::from_ticks(&parsed.series);
        cfg.horizons
            .iter()
            .map(|&h| {
                let sampled = sample_prices(&parsed.series, h, &calendar)?;
                if sampled.grid.symbols.is_empty() {
                    return Err(Error::Data("no symbol trades on every day".into()));
                }
                compute_returns(&sampled.grid)
            })
            .collect()
    } else if let Some(path) = &cfg.returns {
        let base = ReturnPanel::read_csv(read_bytes(path)?.as_slice())?;
        cfg.horizons.iter().map(|&h| base.coarsen(h)).collect()
    } else {
        Err(Error::Config("no input configured".into()))
    }
}

fn period_label(panel: &ReturnPanel) -> String {
    match (panel.days().first(), panel.days().last()) {
        (Some(a), Some(b)) => format!("{a}..{b}"),
        _ => String::new(),
    }
}

fn run_tag(cfg: &RunConfig, h: u32) -> String {
    match cfg.mode {
        CorrKind::Lagged => format!("h{h}_l{}", cfg.lag),
        CorrKind::Synchronous => format!("h{h}_sync"),
    }
}

fn add_network(out: &mut Outputs, dir: &str, prov: &Provenance, net: &ValidatedNetwork) -> Result<()> {
    let name = net.method.as_str();
    out.csv(format!("{dir}/{name}.csv"), prov, |w| net.write_csv(w))?;
    out.json(format!("{dir}/{name}.json"), prov, net.to_json());
    out.graphml(format!("{dir}/{name}.graphml"), prov, net)
}

/// Split, permute and validate at every horizon.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let prov = cfg.provenance("validate");
    let panels = load_panels(cfg)?;
    let mut out = Outputs::new();
    let mut summary = Vec::new();
    for panel in &panels {
        let h = panel.horizon_minutes();
        let tag = run_tag(cfg, h);
        let split;
        let data = match cfg.mode {
            CorrKind::Lagged => {
                split = split_lagged(panel, cfg.lag)?;
                PermData::Lagged(&split)
            }
            CorrKind::Synchronous => PermData::Sync(panel),
        };
        let engine = Engine::new(data)?;
        let plan = PermPlan::new(
            cfg.replicates_for(engine.n()),
            cfg.seed,
            cfg.mode.perm_mode(),
        )?;
        let ckpt_path = cfg.output.join(&tag).join("counts.ckpt");
        let resume = if cfg.resume && ckpt_path.is_file() {
            log::info!("resuming from {}", ckpt_path.display());
            Some(Checkpoint::read_from(read_bytes(&ckpt_path)?.as_slice())?)
        } else {
            None
        };
        log::info!(
            "{tag}: N={} T={} Q={}",
            engine.n(),
            engine.rows(),
            plan.replicates
        );
        let counts = engine.run_resumable(&plan, &cfg.run_options(), resume, |cp| {
            let mut buf = Vec::new();
            cp.write_to(&mut buf).map_err(|e| Error::io(&ckpt_path, e))?;
            write_atomic(&ckpt_path, &buf)?;
            log::info!("{tag}: checkpoint at {}/{}", cp.done, cp.total);
            Ok(())
        })?;

        out.csv(format!("{tag}/corr.csv"), &prov, |w| counts.corr.write_csv(w))?;
        out.json(format!("{tag}/counts.json"), &prov, counts.to_json());
        let mut ckpt = Vec::new();
        Checkpoint::from_counts(&counts, engine.fingerprint())
            .write_to(&mut ckpt)
            .map_err(|e| Error::io(&ckpt_path, e))?;
        out.raw(format!("{tag}/counts.ckpt"), ckpt);

        let mut edge_counts = BTreeMap::new();
        for &method in &cfg.methods {
            let net = match method {
                Method::Bonferroni => bonferroni_network(&counts, cfg.q0)?,
                Method::Fdr => fdr_network(&counts, cfg.q0)?,
                Method::Analytic => analytic_network(&counts.corr, cfg.q0)?,
            };
            add_network(&mut out, &tag, &prov, &net)?;
            edge_counts.insert(
                method.as_str(),
                serde_json::json!({
                    "positive": net.count(crate::validate::Sign::Positive),
                    "negative": net.count(crate::validate::Sign::Negative),
                }),
            );
        }
        summary.push(serde_json::json!({
            "tag": tag,
            "h": h,
            "N": engine.n(),
            "T": engine.rows(),
            "Q": plan.replicates,
            "edges": edge_counts,
        }));
    }
    out.json("run.json", &prov, serde_json::json!({ "runs": summary }));
    out.commit(&cfg.output)
}

/// Summary tables, Epps curve, top coefficients and network topology.
pub fn cmd_report(cfg: &RunConfig, networks: &[PathBuf]) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let prov = cfg.provenance("report");
    let loaded: Vec<(String, ValidatedNetwork)> = networks
        .iter()
        .map(|p| {
            let value: serde_json::Value = serde_json::from_slice(&read_bytes(p)?)?;
            Ok((network_label(p), ValidatedNetwork::from_json(&value)?))
        })
        .collect::<Result<_>>()?;
    let panels = load_panels(cfg)?;
    let mut out = Outputs::new();

    let mut rows = Vec::new();
    let mut top = Vec::new();
    for panel in &panels {
        let split = split_lagged(panel, cfg.lag)?;
        rows.push(summarize(&period_label(panel), panel, &split)?);
        let c = lagged_corr(&split)?;
        let mut entries: Vec<(usize, usize, f64)> = c
            .values
            .indexed_iter()
            .map(|((m, n), &v)| (m, n, v))
            .collect();
        entries.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then((a.0, a.1).cmp(&(b.0, b.1))));
        for (m, n, v) in entries.into_iter().take(TOP_LINKS) {
            top.push((panel.horizon_minutes(), c.symbols[m].clone(), c.symbols[n].clone(), v));
        }
    }
    out.csv("report/summary.csv", &prov, |w| write_summary_csv(&rows, w))?;
    out.csv("report/top_links.csv", &prov, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["h", "leader", "follower", "coefficient"])?;
        for (h, a, b, v) in &top {
            csv.write_record([h.to_string(), a.clone(), b.clone(), v.to_string()])?;
        }
        csv.flush().map_err(|e| Error::io("<csv>", e))
    })?;
    if panels.len() >= 2 {
        let curve = epps_curve(&panels)?;
        out.csv("report/epps.csv", &prov, |w| write_epps_csv(&curve, w))?;
    }

    let mut degrees = Vec::new();
    for (label, net) in &loaded {
        if !net.directed {
            log::warn!("{label}: undirected network, skipping degree and motif analysis");
            continue;
        }
        let d = degree_profile(net)?;
        out.csv(format!("report/{label}_degrees.csv"), &prov, |w| d.write_csv(w))?;
        let census = motif_census(net)?;
        out.csv(format!("report/{label}_census.csv"), &prov, |w| census.write_csv(w))?;
        for (side, values) in [("in", &d.in_degree), ("out", &d.out_degree)] {
            let sample: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            match kde(&sample, None) {
                Ok(curve) => out.csv(format!("report/{label}_kde_{side}.csv"), &prov, |w| {
                    curve.write_csv(w)
                })?,
                Err(e) => log::warn!("{label}: no {side}-degree density: {e}"),
            }
        }
        degrees.push((label.clone(), d));
    }
    if degrees.len() >= 2 {
        let (first, base) = &degrees[0];
        let mut lines = Vec::new();
        for (label, d) in &degrees[1..] {
            for (side, a, b) in [
                ("in", &base.in_degree, &d.in_degree),
                ("out", &base.out_degree, &d.out_degree),
            ] {
                let x: Vec<f64> = a.iter().map(|&v| v as f64).collect();
                let y: Vec<f64> = b.iter().map(|&v| v as f64).collect();
                let r = ranksum_test(&x, &y)?;
                lines.push((first.clone(), label.clone(), side, r));
            }
        }
        out.csv("report/ranksum.csv", &prov, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["network_a", "network_b", "degree", "W", "p", "exact", "summary"])?;
            for (a, b, side, r) in &lines {
                csv.write_record([
                    a.clone(),
                    b.clone(),
                    side.to_string(),
                    r.w.to_string(),
                    r.p.to_string(),
                    r.exact.to_string(),
                    r.to_string(),
                ])?;
            }
            csv.flush().map_err(|e| Error::io("<csv>", e))
        })?;
    }
    out.commit(&cfg.output)
}

const TOP_LINKS: usize = 10;

/// `<parent dir>_<file stem>`, e.g. `h5_l1_fdr`.
fn network_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("network");
    match path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
        Some(dir) => format!("{dir}_{stem}"),
        None => stem.to_string(),
    }
}

/// Lag sweep `1..=l_max` at every configured horizon.
pub fn cmd_lag_sweep(cfg: &RunConfig, l_max: usize) -> Result<Vec<PathBuf>> {
    let mut cfg = cfg.clone();
    cfg.mode = CorrKind::Lagged;
    cfg.validate()?;
    let prov = Provenance::new(
        "lag-sweep",
        serde_json::json!({ "config": cfg, "l_max": l_max }),
        Some(cfg.seed),
    );
    let mut out = Outputs::new();
    for panel in load_panels(&cfg)? {
        let n = panel.n_symbols();
        let plan = PermPlan::new(cfg.replicates_for(n), cfg.seed, CorrKind::Lagged.perm_mode())?;
        let rows = lag_sweep(&panel, l_max, &plan, cfg.q0, &cfg.run_options())?;
        out.csv(
            format!("lag_sweep_h{}.csv", panel.horizon_minutes()),
            &prov,
            |w| write_lag_sweep_csv(&rows, w),
        )?;
    }
    out.commit(&cfg.output)
}

/// Fixed-length segment validation at every configured horizon.
pub fn cmd_segment(cfg: &RunConfig, t_seg: usize) -> Result<Vec<PathBuf>> {
    let mut cfg = cfg.clone();
    cfg.mode = CorrKind::Lagged;
    cfg.validate()?;
    let prov = Provenance::new(
        "segment",
        serde_json::json!({ "config": cfg, "t_seg": t_seg }),
        Some(cfg.seed),
    );
    let mut out = Outputs::new();
    for panel in load_panels(&cfg)? {
        let n = panel.n_symbols();
        let plan = PermPlan::new(cfg.replicates_for(n), cfg.seed, CorrKind::Lagged.perm_mode())?;
        let res = segment_validate(&panel, cfg.lag, t_seg, &plan, cfg.q0, &cfg.run_options())?;
        let dir = format!("segments_h{}_l{}", panel.horizon_minutes(), cfg.lag);
        for (i, net) in res.segments.iter().enumerate() {
            out.csv(format!("{dir}/segment_{i:03}.csv"), &prov, |w| net.write_csv(w))?;
            out.json(format!("{dir}/segment_{i:03}.json"), &prov, net.to_json());
        }
        out.csv(format!("{dir}/union.csv"), &prov, |w| res.union.write_csv(w))?;
        out.json(format!("{dir}/union.json"), &prov, res.union.to_json());
        out.csv(format!("{dir}/occurrences.csv"), &prov, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["source", "target", "sign", "segments"])?;
            for (&(s, t, sign), &k) in &res.occurrences {
                csv.write_record([
                    res.union.nodes[s].clone(),
                    res.union.nodes[t].clone(),
                    sign.as_str().to_string(),
                    k.to_string(),
                ])?;
            }
            csv.flush().map_err(|e| Error::io("<csv>", e))
        })?;
    }
    out.commit(&cfg.output)
}

/// Threshold and false-positive figures for `cmd_analytic`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticReport {
    pub q0: f64,
    pub n: u64,
    /// `(T, per-test level, rho_t)`.
    pub threshold: Option<(usize, f64, f64)>,
    /// `(k, probabilities)`.
    pub false_positive: Option<(u64, FalsePositive)>,
}

impl fmt::Display for AnalyticReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "q0 = {}", self.q0)?;
        writeln!(f, "N = {}", self.n)?;
        if let Some((t, alpha, rho)) = self.threshold {
            writeln!(f, "T = {t}")?;
            writeln!(f, "alpha = {alpha:e}")?;
            writeln!(f, "rho_t = {rho:.4} ({rho})")?;
        }
        if let Some((k, fp)) = self.false_positive {
            writeln!(f, "k = {k}")?;
            writeln!(f, "false_positive_exact = {:.4} ({})", fp.exact, fp.exact)?;
            writeln!(f, "false_positive_approx = {:.4} ({})", fp.approx, fp.approx)?;
        }
        Ok(())
    }
}

/// Normal-theory threshold for `T` rows at level `q0 / N^2`, and the
/// zero-exceedance probability for `k` replicates per test.
pub fn cmd_analytic(t: Option<usize>, q0: f64, n: u64, k: Option<u64>) -> Result<AnalyticReport> {
    if !(0.0..1.0).contains(&q0) {
        return Err(Error::Config(format!("q0 must lie in [0, 1), got {q0}")));
    }
    if n == 0 {
        return Err(Error::Config("N must be positive".into()));
    }
    if t.is_none() && k.is_none() {
        return Err(Error::Config("give T for a threshold or k for a probability".into()));
    }
    let threshold = match t {
        Some(t) => {
            let alpha = q0 / (n * n) as f64;
            let rho = if q0 == 0.0 { 1.0 } else { solve_threshold(t, alpha)? };
            Some((t, alpha, rho))
        }
        None => None,
    };
    let false_positive = match k {
        Some(k) => Some((k, false_positive_prob(q0, k, n)?)),
        None => None,
    };
    Ok(AnalyticReport {
        q0,
        n,
        threshold,
        false_positive,
    })
}

/// Samples ticks onto the `h`-minute grid.
pub fn cmd_ingest(ticks: &Path, h: u32, output: &Path) -> Result<Vec<PathBuf>> {
    let prov = Provenance::new(
        "ingest",
        serde_json::json!({ "ticks": ticks, "h": h }),
        None,
    );
    let parsed = parse_ticks(read_bytes(ticks)?.as_slice())?;
    for d in &parsed.diagnostics {
        log::warn!("{}: line {}: {}", ticks.display(), d.line, d.message);
    }
    let calendar = SessionCalendar::from_ticks(&parsed.series);
    let sampled = sample_prices(&parsed.series, h, &calendar)?;
    let mut out = Outputs::new();
    out.csv(output, &prov, |w| sampled.grid.write_csv(w))?;
    out.commit(Path::new(""))
}

/// Log returns of a sampled price grid.
pub fn cmd_returns(grid: &Path, output: &Path) -> Result<Vec<PathBuf>> {
    let prov = Provenance::new("returns", serde_json::json!({ "grid": grid }), None);
    let g = PriceGrid::read_csv(read_bytes(grid)?.as_slice())?;
    let panel = compute_returns(&g)?;
    let mut out = Outputs::new();
    out.csv(output, &prov, |w| panel.write_csv(w))?;
    out.commit(Path::new(""))
}

/// What `cmd_synth` generates.
#[derive(Debug, Clone)]
pub enum SynthRequest {
    Null { n: usize, days: usize, h: u32, seed: u64 },
    Planted { spec: PlantedSpec, days: usize, h: u32 },
    Ticks { returns: PathBuf, spec: TickSpec },
}

/// Writes a synthetic return panel (plus the planted population
/// correlations) or a tick stream to `output`.
pub fn cmd_synth(req: &SynthRequest, output: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new();
    match req {
        SynthRequest::Null { n, days, h, seed } => {
            let prov = Provenance::new(
                "synth null",
                serde_json::json!({ "n": n, "days": days, "h": h }),
                Some(*seed),
            );
            let panel = gen_null(*n, *days, *h, *seed)?;
            out.csv(output, &prov, |w| panel.write_csv(w))?;
        }
        SynthRequest::Planted { spec, days, h } => {
            let prov = Provenance::new(
                "synth planted",
                serde_json::json!({ "spec": spec, "days": days, "h": h }),
                Some(spec.seed),
            );
            let planted = gen_planted(spec, *days, *h)?;
            out.csv(output, &prov, |w| planted.panel.write_csv(w))?;
            let mut pop = output.as_os_str().to_owned();
            pop.push(".population.csv");
            out.csv(PathBuf::from(pop), &prov, |w| {
                let mut csv = csv::Writer::from_writer(w);
                for p in &planted.population {
                    csv.serialize(p)?;
                }
                csv.flush().map_err(|e| Error::io("<csv>", e))
            })?;
        }
        SynthRequest::Ticks { returns, spec } => {
            let rate = match spec.rate {
                crate::synth::TradeRate::EverySecond => serde_json::json!("every-second"),
                crate::synth::TradeRate::Poisson(l) => serde_json::json!(l),
            };
            let prov = Provenance::new(
                "synth ticks",
                serde_json::json!({
                    "returns": returns,
                    "rate": rate,
                    "start_price": spec.start_price,
                    "silent": spec.silent,
                }),
                Some(spec.seed),
            );
            let panel = ReturnPanel::read_csv(read_bytes(returns)?.as_slice())?;
            let ticks = gen_ticks(&panel, spec)?;
            out.csv(output, &prov, |w| write_ticks_csv(w, &ticks))?;
        }
    }
    out.commit(Path::new(""))
}
