//! Degree profiles, kernel density estimates, the Wilcoxon rank-sum test and
//! the directed triad census.
//!
//! Edge signs are ignored throughout: a positive and a negative link on the
//! same ordered pair form one arc.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_sf;
use crate::validate::ValidatedNetwork;

/// Distinct directed arcs of a network, signs dropped.
fn arcs(net: &ValidatedNetwork) -> Result<BTreeSet<(usize, usize)>> {
    if !net.directed {
        return Err(Error::Config(
            "degree and motif analysis need a directed network".into(),
        ));
    }
    Ok(net.edges.iter().map(|e| (e.source, e.target)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub nodes: Vec<String>,
    pub in_degree: Vec<usize>,
    pub out_degree: Vec<usize>,
}

impl DegreeProfile {
    pub fn arc_count(&self) -> usize {
        self.out_degree.iter().sum()
    }

    /// CSV `symbol,in_degree,out_degree`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["symbol", "in_degree", "out_degree"])?;
        for ((s, i), o) in self.nodes.iter().zip(&self.in_degree).zip(&self.out_degree) {
            w.write_record([s.as_str(), &i.to_string(), &o.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// In- and out-degrees over distinct arcs. A self-lag link adds one to
/// both degrees of its node.
pub fn degree_profile(net: &ValidatedNetwork) -> Result<DegreeProfile> {
    let n = net.nodes.len();
    let mut in_degree = vec![0; n];
    let mut out_degree = vec![0; n];
    for (s, t) in arcs(net)? {
        out_degree[s] += 1;
        in_degree[t] += 1;
    }
    Ok(DegreeProfile {
        nodes: net.nodes.clone(),
        in_degree,
        out_degree,
    })
}

const KDE_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl KdeCurve {
    /// CSV `x,density`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"])?;
        for (x, d) in self.x.iter().zip(&self.density) {
            w.write_record([x.to_string(), d.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Gaussian kernel density estimate on 512 points spanning
/// `[min - 3 bw, max + 3 bw]`. The default bandwidth is Scott's rule,
/// `sd * n^(-1/5)`.
pub fn kde(values: &[f64], bandwidth: Option<f64>) -> Result<KdeCurve> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Data("density estimate needs at least two values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("density estimate over non-finite values".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return Err(Error::Data("density estimate over a constant sample".into()));
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(Error::Config(format!("bandwidth must be positive, got {b}"))),
        None => var.sqrt() * (n as f64).powf(-0.2),
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bw;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bw;
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let norm = 1.0 / (n as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..KDE_POINTS).map(|i| lo + step * i as f64).collect();
    let density = x
        .iter()
        .map(|&g| {
            norm * values
                .iter()
                .map(|&v| (-0.5 * ((g - v) / bw).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(KdeCurve {
        bandwidth: bw,
        x,
        density,
    })
}

/// Largest sample sizes handled by exact enumeration.
const EXACT_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Rank sum of the first sample, midranks for ties.
    pub w: f64,
    /// Two-tailed p-value.
    pub p: f64,
    pub exact: bool,
}

impl fmt::Display for RankSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.p < 0.001 {
            write!(f, "W={}, p<0.001", self.w)
        } else {
            write!(f, "W={}, p={:.3}", self.w, self.p)
        }
    }
}

/// Midranks (1-based) of `pooled`.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sample Wilcoxon rank-sum test.
///
/// Exact when both samples have at most ten values: the null distribution of
/// the rank sum is enumerated over all ways of assigning the pooled midranks
/// to the first sample. Otherwise the normal approximation with tie-corrected
/// variance and a continuity correction of 1/2 is used.
pub fn ranksum_test(x: &[f64], y: &[f64]) -> Result<RankSum> {
    let ranks = pooled_ranks(x, y)?;
    let w: f64 = ranks[..x.len()].iter().sum();
    if x.len() <= EXACT_MAX && y.len() <= EXACT_MAX {
        Ok(RankSum {
            w,
            p: exact_ranksum_p(&ranks, x.len()),
            exact: true,
        })
    } else {
        Ok(RankSum {
            w,
            p: normal_ranksum_p(&ranks, x.len()),
            exact: false,
        })
    }
}

/// The normal approximation regardless of sample size.
pub fn ranksum_normal(x: &[f64], y: &[f64]) -> Result<RankSum> {
    let ranks = pooled_ranks(x, y)?;
    Ok(RankSum {
        w: ranks[..x.len()].iter().sum(),
        p: normal_ranksum_p(&ranks, x.len()),
        exact: false,
    })
}

fn pooled_ranks(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Data("rank-sum test needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Data("rank-sum test over NaN values".into()));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    Ok(midranks(&pooled))
}

fn exact_ranksum_p(ranks: &[f64], m: usize) -> f64 {
    // midranks are multiples of 1/2, so doubled ranks are integers
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[j][s]: subsets of size j with doubled rank sum s
    let mut ways = vec![vec![0u64; max_sum + 1]; m + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for j in (1..=m).rev() {
            for s in (r..=max_sum).rev() {
                ways[j][s] += ways[j - 1][s - r];
            }
        }
    }
    let observed: usize = doubled[..m].iter().sum();
    let total: u64 = ways[m].iter().sum();
    let below: u64 = ways[m][..=observed].iter().sum();
    let above: u64 = ways[m][observed..].iter().sum();
    let tail = below.min(above) as f64 / total as f64;
    (2.0 * tail).min(1.0)
}

fn normal_ranksum_p(ranks: &[f64], m: usize) -> f64 {
    let big_n = ranks.len() as f64;
    let (mf, nf) = (m as f64, big_n - m as f64);
    let w: f64 = ranks[..m].iter().sum();
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let mean = mf * (big_n + 1.0) / 2.0;
    let var = mf * nf / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * normal_sf(z)).min(1.0)
}

/// MAN triad classes in the conventional order.
pub const TRIAD_CLASSES: [&str; 16] = [
    "003", "012", "102", "021D", "021U", "021C", "111D", "111U", "030T", "030C", "201", "120D",
    "120U", "120C", "210", "300",
];

/// Class index for each of the 64 arc patterns of an ordered triple
/// `(v, u, w)`. Bits: v->u 1, u->v 2, v->w 4, w->v 8, u->w 16, w->u 32.
const TRICODE_CLASS: [u8; 64] = [
    0, 1, 1, 2, 1, 3, 5, 7, 1, 5, 4, 6, 2, 7, 6, 10, 1, 5, 3, 7, 4, 8, 8, 12, 5, 9, 8, 13, 6, 13,
    11, 14, 1, 4, 5, 6, 5, 8, 9, 13, 3, 8, 8, 11, 7, 12, 13, 14, 2, 6, 7, 10, 6, 11, 13, 14, 7,
    13, 12, 14, 10, 14, 14, 15,
];

/// First class index with at least two arcs (`102`).
const FIRST_REPORTED: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifCensus {
    /// Counts indexed like [`TRIAD_CLASSES`]; the first two stay zero.
    pub counts: [u64; 16],
    /// Triples with at least two arcs.
    pub total: u64,
}

impl MotifCensus {
    pub fn count(&self, class: &str) -> Option<u64> {
        TRIAD_CLASSES
            .iter()
            .position(|c| *c == class)
            .map(|i| self.counts[i])
    }

    /// `(class, count, percent of total)` for the 14 reported classes.
    pub fn rows(&self) -> Vec<(&'static str, u64, f64)> {
        (FIRST_REPORTED..16)
            .map(|i| {
                let pct = if self.total == 0 {
                    0.0
                } else {
                    100.0 * self.counts[i] as f64 / self.total as f64
                };
                (TRIAD_CLASSES[i], self.counts[i], pct)
            })
            .collect()
    }

    /// CSV `motif,count,percent`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["motif", "count", "percent"])?;
        for (class, count, pct) in self.rows() {
            w.write_record([class.to_string(), count.to_string(), pct.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

struct Digraph {
    /// Sorted out- and in-neighbours, self-loops dropped.
    succ: Vec<Vec<usize>>,
    /// Sorted union of in- and out-neighbours.
    nbrs: Vec<Vec<usize>>,
}

impl Digraph {
    fn new(n: usize, arcs: &BTreeSet<(usize, usize)>) -> Self {
        let mut succ = vec![Vec::new(); n];
        let mut nbrs = vec![BTreeSet::new(); n];
        for &(s, t) in arcs {
            if s != t {
                succ[s].push(t);
                nbrs[s].insert(t);
                nbrs[t].insert(s);
            }
        }
        Digraph {
            succ,
            nbrs: nbrs.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    fn has(&self, s: usize, t: usize) -> bool {
        self.succ[s].binary_search(&t).is_ok()
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.nbrs[a].binary_search(&b).is_ok()
    }

    fn tricode(&self, v: usize, u: usize, w: usize) -> usize {
        [
            (v, u, 1),
            (u, v, 2),
            (v, w, 4),
            (w, v, 8),
            (u, w, 16),
            (w, u, 32),
        ]
        .iter()
        .filter(|&&(s, t, _)| self.has(s, t))
        .map(|&(_, _, bit)| bit)
        .sum()
    }
}

/// Triad census of the directed network restricted to triples with at
/// least two arcs. Self-loops do not take part.
///
/// Only triples touching an arc are visited: each connected pair `u < v`
/// looks at the union of their neighbourhoods, and triples whose only arcs
/// lie on `(u, v)` are counted in bulk.
pub fn motif_census(net: &ValidatedNetwork) -> Result<MotifCensus> {
    let n = net.nodes.len();
    let g = Digraph::new(n, &arcs(net)?);
    let counts = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut local = [0u64; 16];
            let mut seen = Vec::new();
            for &u in g.nbrs[v].iter().filter(|&&u| u > v) {
                seen.clear();
                seen.extend(g.nbrs[u].iter().chain(&g.nbrs[v]).copied().filter(|&w| w != u && w != v));
                seen.sort_unstable();
                seen.dedup();
                if g.has(u, v) && g.has(v, u) {
                    // mutual dyad with an isolated third node
                    local[2] += (n - seen.len() - 2) as u64;
                }
                for &w in &seen {
                    if u < w || (v < w && w < u && !g.adjacent(v, w)) {
                        local[TRICODE_CLASS[g.tricode(v, u, w)] as usize] += 1;
                    }
                }
            }
            local
        })
        .reduce(
            || [0u64; 16],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let mut counts = counts;
    counts[0] = 0;
    counts[1] = 0;
    Ok(MotifCensus {
        total: counts.iter().sum(),
        counts,
    })
}
