//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use leadlag_core::corr::{CorrKind, CorrMatrix};
use leadlag_core::permengine::{ExceedanceCounts, PermMode};
use leadlag_core::returns::LagSplit;
use leadlag_core::validate::{Edge, Method, NetworkParams, Sign, ValidatedNetwork};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

pub fn symbols(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{i}")).collect()
}

pub fn split_from(leader: Array2<f64>, follower: Array2<f64>) -> LagSplit {
    LagSplit {
        symbols: symbols(leader.ncols()),
        horizon_minutes: 5,
        lag: 1,
        leader,
        follower,
        zero_variance: Vec::new(),
    }
}

/// Textbook two-pass Pearson coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn naive_lagged(leader: &Array2<f64>, follower: &Array2<f64>) -> Array2<f64> {
    let n = leader.ncols();
    Array2::from_shape_fn((n, n), |(m, k)| {
        let a: Vec<f64> = leader.column(m).to_vec();
        let b: Vec<f64> = follower.column(k).to_vec();
        pearson(&a, &b)
    })
}

/// Exceedance counts with a placeholder coefficient matrix.
pub fn counts(up: Array2<u64>, down: Array2<u64>, q: u64) -> ExceedanceCounts {
    let n = up.nrows();
    ExceedanceCounts {
        corr: CorrMatrix {
            symbols: symbols(n),
            kind: CorrKind::Lagged,
            horizon_minutes: 5,
            lag: 1,
            rows: 100,
            values: Array2::zeros((n, n)),
        },
        up,
        down,
        replicates: q,
        seed: 0,
        mode: PermMode::LaggedRowShuffle,
    }
}

/// Directed network over `n` nodes with one positive edge per arc.
pub fn network(n: usize, arcs: &[(usize, usize)]) -> ValidatedNetwork {
    ValidatedNetwork {
        nodes: symbols(n),
        edges: arcs
            .iter()
            .map(|&(s, t)| Edge {
                source: s,
                target: t,
                sign: Sign::Positive,
                coefficient: 0.1,
                count: Some(0),
                p: 0.0,
            })
            .collect(),
        method: Method::Bonferroni,
        params: NetworkParams {
            horizon_minutes: 5,
            lag: 1,
            q0: 0.01,
            rows: 100,
            replicates: Some(100),
            seed: Some(0),
        },
        directed: true,
    }
}

/// Triad patterns on labelled nodes a=0, b=1, c=2.
const PATTERNS: [(&str, &[(usize, usize)]); 16] = [
    ("003", &[]),
    ("012", &[(0, 1)]),
    ("102", &[(0, 1), (1, 0)]),
    ("021D", &[(1, 0), (1, 2)]),
    ("021U", &[(0, 1), (2, 1)]),
    ("021C", &[(0, 1), (1, 2)]),
    ("111D", &[(0, 1), (1, 0), (2, 1)]),
    ("111U", &[(0, 1), (1, 0), (1, 2)]),
    ("030T", &[(0, 1), (2, 1), (0, 2)]),
    ("030C", &[(1, 0), (2, 1), (0, 2)]),
    ("201", &[(0, 1), (1, 0), (1, 2), (2, 1)]),
    ("120D", &[(1, 0), (1, 2), (0, 2), (2, 0)]),
    ("120U", &[(0, 1), (2, 1), (0, 2), (2, 0)]),
    ("120C", &[(0, 1), (1, 2), (0, 2), (2, 0)]),
    ("210", &[(0, 1), (1, 2), (2, 1), (0, 2), (2, 0)]),
    ("300", &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)]),
];

/// Class of the triple `(i, j, k)` found by trying every relabelling
/// against the reference drawings.
pub fn classify(adj: &[Vec<bool>], nodes: [usize; 3]) -> &'static str {
    let mut actual = [[false; 3]; 3];
    for x in 0..3 {
        for y in 0..3 {
            actual[x][y] = x != y && adj[nodes[x]][nodes[y]];
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for (name, arcs) in PATTERNS {
        for p in PERMS {
            let mut drawn = [[false; 3]; 3];
            for &(s, t) in arcs {
                drawn[p[s]][p[t]] = true;
            }
            if drawn == actual {
                return name;
            }
        }
    }
    unreachable!("every triad matches a pattern")
}

/// Census by visiting every unordered triple.
pub fn brute_census(n: usize, arcs: &[(usize, usize)]) -> std::collections::BTreeMap<&'static str, u64> {
    let mut adj = vec![vec![false; n]; n];
    for &(s, t) in arcs {
        if s != t {
            adj[s][t] = true;
        }
    }
    let mut out = std::collections::BTreeMap::new();
    for (name, _) in PATTERNS {
        out.insert(name, 0);
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                *out.get_mut(classify(&adj, [i, j, k])).unwrap() += 1;
            }
        }
    }
    out
}

/// Random digraph arcs, with occasional self-loops.
pub fn erdos_renyi(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut arcs = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if rng.random::<f64>() < density {
                arcs.push((s, t));
            }
        }
    }
    arcs
}

/// Two-sided rank-sum p-value by listing every subset of pooled midranks.
pub fn enumerate_ranksum_p(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let total = pooled.len();
    let ranks: Vec<f64> = pooled
        .iter()
        .map(|&v| {
            let below = pooled.iter().filter(|&&u| u < v).count() as f64;
            let equal = pooled.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = ranks[..x.len()].iter().sum();
    let (mut le, mut ge, mut all) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let s: f64 = (0..total).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        all += 1;
        if s <= observed + 1e-9 {
            le += 1;
        }
        if s >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / all as f64).min(1.0)
}
