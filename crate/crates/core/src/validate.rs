//! Statistically validated networks from exceedance counts.
//!
//! A pair `(m, n)` carries a positive link when its upper-tail p-value `U/Q`
//! survives the multiple-comparison rule and a negative link when `D/Q`
//! does. The two signs are corrected as separate families.
//!
//! Lagged matrices are directed and test all `N^2` ordered pairs, self-lags
//! included. Synchronous matrices are symmetric, so only the `N(N-1)/2`
//! pairs with `m < n` are tested.
//!
//! Thresholds are compared in product form (`U * tests < q0 * Q`) with a
//! relative guard of `1e-12`, so a count sitting exactly on a decimal
//! threshold such as `q0 = 0.01` is not let through by binary rounding.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytic;
use crate::corr::{CorrKind, CorrMatrix};
use crate::error::{Error, Result};
use crate::permengine::{Engine, ExceedanceCounts, PermData, PermMode, PermPlan, RunOptions};
use crate::returns::{split_lagged, ReturnPanel};

const BOUNDARY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bonferroni,
    Fdr,
    Analytic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bonferroni => "bonferroni",
            Method::Fdr => "fdr",
            Method::Analytic => "analytic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub sign: Sign,
    pub coefficient: f64,
    /// `U` for positive edges, `D` for negative ones; absent for analytic
    /// networks.
    pub count: Option<u64>,
    pub p: f64,
}

impl Edge {
    pub fn key(&self) -> (usize, usize, Sign) {
        (self.source, self.target, self.sign)
    }

    pub fn is_self_loop(&self) -> bool {
        self.source == self.target
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub horizon_minutes: u32,
    pub lag: usize,
    pub q0: f64,
    /// Observations behind each coefficient.
    pub rows: usize,
    /// Permutation replicates `Q`; absent for analytic networks.
    pub replicates: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedNetwork {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub method: Method,
    pub params: NetworkParams,
    pub directed: bool,
}

impl ValidatedNetwork {
    pub fn edge_keys(&self) -> BTreeSet<(usize, usize, Sign)> {
        self.edges.iter().map(Edge::key).collect()
    }

    pub fn count(&self, sign: Sign) -> usize {
        self.edges.iter().filter(|e| e.sign == sign).count()
    }

    pub fn contains(&self, source: usize, target: usize, sign: Sign) -> bool {
        self.edges
            .iter()
            .any(|e| e.source == source && e.target == target && e.sign == sign)
    }

    /// Edge list `source,target,sign,coefficient,count,p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "target", "sign", "coefficient", "count", "p"])?;
        for e in &self.edges {
            w.write_record([
                self.nodes[e.source].as_str(),
                self.nodes[e.target].as_str(),
                e.sign.as_str(),
                &e.coefficient.to_string(),
                &e.count.map(|c| c.to_string()).unwrap_or_default(),
                &e.p.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|e| {
                serde_json::json!({
                    "source": self.nodes[e.source],
                    "target": self.nodes[e.target],
                    "sign": e.sign.as_str(),
                    "coefficient": e.coefficient,
                    "count": e.count,
                    "p": e.p,
                    "self_loop": e.is_self_loop(),
                })
            })
            .collect();
        serde_json::json!({
            "method": self.method.as_str(),
            "directed": self.directed,
            "params": self.params,
            "nodes": self.nodes,
            "edges": edges,
        })
    }

    /// Inverse of [`ValidatedNetwork::to_json`]; extra top-level keys are
    /// ignored.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct FileEdge {
            source: String,
            target: String,
            sign: Sign,
            coefficient: f64,
            count: Option<u64>,
            p: f64,
        }
        #[derive(Deserialize)]
        struct FileNetwork {
            method: Method,
            directed: bool,
            params: NetworkParams,
            nodes: Vec<String>,
            edges: Vec<FileEdge>,
        }
        let f = FileNetwork::deserialize(value)?;
        let index: BTreeMap<&str, usize> =
            f.nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if index.len() != f.nodes.len() {
            return Err(Error::Data("network lists a node twice".into()));
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Data(format!("edge names unknown node `{name}`")))
        };
        let edges = f
            .edges
            .iter()
            .map(|e| {
                Ok(Edge {
                    source: lookup(&e.source)?,
                    target: lookup(&e.target)?,
                    sign: e.sign,
                    coefficient: e.coefficient,
                    count: e.count,
                    p: e.p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ValidatedNetwork {
            nodes: f.nodes,
            edges,
            method: f.method,
            params: f.params,
            directed: f.directed,
        })
    }

    /// GraphML document with `sign`, `coefficient`, `p` and `self_loop`
    /// edge attributes.
    pub fn write_graphml<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<graphml>", e);
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        s.push_str("  <key id=\"sign\" for=\"edge\" attr.name=\"sign\" attr.type=\"string\"/>\n");
        s.push_str(
            "  <key id=\"coefficient\" for=\"edge\" attr.name=\"coefficient\" attr.type=\"double\"/>\n",
        );
        s.push_str("  <key id=\"p\" for=\"edge\" attr.name=\"p\" attr.type=\"double\"/>\n");
        s.push_str(
            "  <key id=\"self_loop\" for=\"edge\" attr.name=\"self_loop\" attr.type=\"boolean\"/>\n",
        );
        let kind = if self.directed { "directed" } else { "undirected" };
        s.push_str(&format!(
            "  <graph id=\"{}\" edgedefault=\"{kind}\">\n",
            self.method.as_str()
        ));
        for node in &self.nodes {
            s.push_str(&format!("    <node id=\"{}\"/>\n", xml_escape(node)));
        }
        for e in &self.edges {
            s.push_str(&format!(
                "    <edge source=\"{}\" target=\"{}\">\n",
                xml_escape(&self.nodes[e.source]),
                xml_escape(&self.nodes[e.target])
            ));
            s.push_str(&format!(
                "      <data key=\"sign\">{}</data>\n",
                xml_escape(e.sign.as_str())
            ));
            s.push_str(&format!(
                "      <data key=\"coefficient\">{}</data>\n",
                e.coefficient
            ));
            s.push_str(&format!("      <data key=\"p\">{}</data>\n", e.p));
            s.push_str(&format!(
                "      <data key=\"self_loop\">{}</data>\n",
                e.is_self_loop()
            ));
            s.push_str("    </edge>\n");
        }
        s.push_str("  </graph>\n</graphml>\n");
        out.write_all(s.as_bytes()).map_err(io)?;
        Ok(())
    }
}

fn xml_escape(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&apos;"),
            c => o.push(c),
        }
    }
    o
}

fn check_q0(q0: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q0) {
        return Err(Error::Config(format!("q0 must lie in [0, 1), got {q0}")));
    }
    Ok(())
}

/// Ordered pairs under test and whether the result is directed.
fn tested_pairs(kind: CorrKind, n: usize) -> (Vec<(usize, usize)>, bool) {
    match kind {
        CorrKind::Lagged => ((0..n).flat_map(|m| (0..n).map(move |k| (m, k))).collect(), true),
        CorrKind::Synchronous => (
            (0..n).flat_map(|m| (m + 1..n).map(move |k| (m, k))).collect(),
            false,
        ),
    }
}

/// `count / Q < level * rank / tests`, evaluated as a guarded product.
fn passes(count: u64, q: u64, tests: usize, rank: usize, q0: f64) -> bool {
    let lhs = count as f64 * tests as f64;
    let rhs = q0 * q as f64 * rank as f64;
    lhs < rhs * (1.0 - BOUNDARY_GUARD)
}

fn counts_params(counts: &ExceedanceCounts, q0: f64) -> NetworkParams {
    NetworkParams {
        horizon_minutes: counts.corr.horizon_minutes,
        lag: counts.corr.lag,
        q0,
        rows: counts.corr.rows,
        replicates: Some(counts.replicates),
        seed: Some(counts.seed),
    }
}

fn counts_of(counts: &ExceedanceCounts, sign: Sign) -> &ndarray::Array2<u64> {
    match sign {
        Sign::Positive => &counts.up,
        Sign::Negative => &counts.down,
    }
}

fn make_edge(counts: &ExceedanceCounts, (m, n): (usize, usize), sign: Sign) -> Edge {
    let c = counts_of(counts, sign)[[m, n]];
    Edge {
        source: m,
        target: n,
        sign,
        coefficient: counts.corr.get(m, n),
        count: Some(c),
        p: c as f64 / counts.replicates as f64,
    }
}

/// Links whose one-tailed p-value is below `q0 / tests`.
pub fn bonferroni_network(counts: &ExceedanceCounts, q0: f64) -> Result<ValidatedNetwork> {
    check_q0(q0)?;
    let (pairs, directed) = tested_pairs(counts.corr.kind, counts.n());
    let tests = pairs.len();
    let mut edges = Vec::new();
    for sign in [Sign::Positive, Sign::Negative] {
        let c = counts_of(counts, sign);
        for &(m, n) in &pairs {
            if passes(c[[m, n]], counts.replicates, tests, 1, q0) {
                edges.push(make_edge(counts, (m, n), sign));
            }
        }
    }
    Ok(ValidatedNetwork {
        nodes: counts.symbols().to_vec(),
        edges,
        method: Method::Bonferroni,
        params: counts_params(counts, q0),
        directed,
    })
}

/// Benjamini-Hochberg step-up, run separately on the positive and negative
/// families. Tied p-values share the largest rank of their group.
pub fn fdr_network(counts: &ExceedanceCounts, q0: f64) -> Result<ValidatedNetwork> {
    check_q0(q0)?;
    let (pairs, directed) = tested_pairs(counts.corr.kind, counts.n());
    let tests = pairs.len();
    let mut edges = Vec::new();
    for sign in [Sign::Positive, Sign::Negative] {
        let c = counts_of(counts, sign);
        let mut sorted: Vec<u64> = pairs.iter().map(|&(m, n)| c[[m, n]]).collect();
        sorted.sort_unstable();
        // largest tie-group end rank k with p_(k) < k q0 / tests
        let mut cutoff = None;
        for k in 1..=sorted.len() {
            let group_end = k == sorted.len() || sorted[k] != sorted[k - 1];
            if group_end && passes(sorted[k - 1], counts.replicates, tests, k, q0) {
                cutoff = Some(sorted[k - 1]);
            }
        }
        if let Some(limit) = cutoff {
            for &(m, n) in &pairs {
                if c[[m, n]] <= limit {
                    edges.push(make_edge(counts, (m, n), sign));
                }
            }
        }
    }
    Ok(ValidatedNetwork {
        nodes: counts.symbols().to_vec(),
        edges,
        method: Method::Fdr,
        params: counts_params(counts, q0),
        directed,
    })
}

/// Links whose coefficient exceeds the normal-theory threshold for
/// significance `q0 / tests` at `T = c.rows`.
pub fn analytic_network(c: &CorrMatrix, q0: f64) -> Result<ValidatedNetwork> {
    check_q0(q0)?;
    let (pairs, directed) = tested_pairs(c.kind, c.n());
    let density = analytic::NullCorrDensity::new(c.rows)?;
    let mut edges = Vec::new();
    if q0 > 0.0 && !pairs.is_empty() {
        let alpha = q0 / pairs.len() as f64;
        let rho = analytic::solve_threshold(c.rows, alpha)?;
        for sign in [Sign::Positive, Sign::Negative] {
            for &(m, n) in &pairs {
                let v = c.get(m, n);
                let signed = match sign {
                    Sign::Positive => v,
                    Sign::Negative => -v,
                };
                if signed > rho {
                    edges.push(Edge {
                        source: m,
                        target: n,
                        sign,
                        coefficient: v,
                        count: None,
                        p: density.upper_tail(signed)?,
                    });
                }
            }
        }
    }
    Ok(ValidatedNetwork {
        nodes: c.symbols.clone(),
        edges,
        method: Method::Analytic,
        params: NetworkParams {
            horizon_minutes: c.horizon_minutes,
            lag: c.lag,
            q0,
            rows: c.rows,
            replicates: None,
            seed: None,
        },
        directed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignOverlap {
    pub a: usize,
    pub b: usize,
    pub common: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub method_a: Method,
    pub method_b: Method,
    pub positive: SignOverlap,
    pub negative: SignOverlap,
}

/// Edge counts of two networks on the same nodes and of their intersection.
pub fn compare_networks(a: &ValidatedNetwork, b: &ValidatedNetwork) -> Result<OverlapReport> {
    if a.nodes != b.nodes {
        return Err(Error::Data(
            "networks compared over different node sets".into(),
        ));
    }
    let (ka, kb) = (a.edge_keys(), b.edge_keys());
    let overlap = |sign: Sign| SignOverlap {
        a: a.count(sign),
        b: b.count(sign),
        common: ka.intersection(&kb).filter(|k| k.2 == sign).count(),
    };
    Ok(OverlapReport {
        method_a: a.method,
        method_b: b.method,
        positive: overlap(Sign::Positive),
        negative: overlap(Sign::Negative),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagCount {
    pub lag: usize,
    pub bonferroni_positive: usize,
    pub bonferroni_negative: usize,
    pub fdr_positive: usize,
    pub fdr_negative: usize,
}

/// Full split, permute and validate pipeline for each lag `1..=l_max`.
pub fn lag_sweep(
    panel: &ReturnPanel,
    l_max: usize,
    plan: &PermPlan,
    q0: f64,
    opts: &RunOptions,
) -> Result<Vec<LagCount>> {
    check_q0(q0)?;
    let slots = panel.slots_per_day();
    if l_max == 0 {
        return Err(Error::Config("lag sweep needs l_max >= 1".into()));
    }
    if l_max >= slots {
        return Err(Error::LagTooLarge { lag: l_max, slots });
    }
    ensure_lagged(plan)?;
    (1..=l_max)
        .map(|lag| {
            let split = split_lagged(panel, lag)?;
            let counts = Engine::new(PermData::Lagged(&split))?.run(plan, opts)?;
            let bonf = bonferroni_network(&counts, q0)?;
            let fdr = fdr_network(&counts, q0)?;
            Ok(LagCount {
                lag,
                bonferroni_positive: bonf.count(Sign::Positive),
                bonferroni_negative: bonf.count(Sign::Negative),
                fdr_positive: fdr.count(Sign::Positive),
                fdr_negative: fdr.count(Sign::Negative),
            })
        })
        .collect()
}

pub fn write_lag_sweep_csv<W: Write>(rows: &[LagCount], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn ensure_lagged(plan: &PermPlan) -> Result<()> {
    if plan.mode != PermMode::LaggedRowShuffle {
        return Err(Error::Config(
            "lagged analyses need the lagged-row-shuffle permutation mode".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAnalysis {
    /// Bonferroni network of each segment, in time order.
    pub segments: Vec<ValidatedNetwork>,
    /// Distinct links validated in at least one segment.
    pub union: ValidatedNetwork,
    /// Segments in which each union edge was validated, keyed like
    /// [`Edge::key`].
    pub occurrences: BTreeMap<(usize, usize, Sign), usize>,
}

/// Cuts the lag-aligned rows into consecutive blocks of `t_seg` rows,
/// validates each block with the same plan and collects the union.
///
/// Rows left over after the last whole block are dropped.
pub fn segment_validate(
    panel: &ReturnPanel,
    lag: usize,
    t_seg: usize,
    plan: &PermPlan,
    q0: f64,
    opts: &RunOptions,
) -> Result<SegmentAnalysis> {
    check_q0(q0)?;
    ensure_lagged(plan)?;
    let split = split_lagged(panel, lag)?;
    if t_seg < 3 {
        return Err(Error::Config(format!("segment length {t_seg} is below 3 rows")));
    }
    if t_seg > split.rows() {
        return Err(Error::Config(format!(
            "segment length {t_seg} exceeds the {} available lagged rows",
            split.rows()
        )));
    }
    let mut segments = Vec::new();
    for s in 0..split.rows() / t_seg {
        let part = split.select_rows(s * t_seg..(s + 1) * t_seg);
        let counts = Engine::new(PermData::Lagged(&part))?.run(plan, opts)?;
        segments.push(bonferroni_network(&counts, q0)?);
    }

    let mut occurrences = BTreeMap::new();
    let mut first: BTreeMap<(usize, usize, Sign), Edge> = BTreeMap::new();
    for net in &segments {
        for e in &net.edges {
            *occurrences.entry(e.key()).or_insert(0) += 1;
            first.entry(e.key()).or_insert_with(|| e.clone());
        }
    }
    let mut params = segments[0].params.clone();
    params.rows = t_seg;
    let union = ValidatedNetwork {
        nodes: split.symbols.clone(),
        edges: first.into_values().collect(),
        method: Method::Bonferroni,
        params,
        directed: true,
    };
    Ok(SegmentAnalysis {
        segments,
        union,
        occurrences,
    })
}
