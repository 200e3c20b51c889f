mod common;

use leadlag_core::corr::lagged_corr;
use leadlag_core::epps::{epps_curve, summarize};
use leadlag_core::ingest::{sample_prices, SessionCalendar, TickRecord};
use leadlag_core::permengine::{PermMode, PermPlan, RunOptions};
use leadlag_core::returns::{compute_returns, split_lagged};
use leadlag_core::synth::{gen_null, gen_planted, gen_ticks, PlantedEdge, PlantedSpec, TickSpec, TradeRate};
use leadlag_core::validate::{lag_sweep, segment_validate, Sign};
use std::collections::BTreeMap;

fn planted(n: usize, seed: u64, edges: Vec<PlantedEdge>) -> PlantedSpec {
    PlantedSpec {
        edges,
        ..PlantedSpec::null(n, seed)
    }
}

fn edge(leader: usize, follower: usize, lag: usize, coefficient: f64) -> PlantedEdge {
    PlantedEdge {
        leader,
        follower,
        lag,
        coefficient,
    }
}

fn plan(n: usize, seed: u64) -> PermPlan {
    PermPlan::per_test(100, n, seed, PermMode::LaggedRowShuffle).unwrap()
}

#[test]
fn lag_sweep_peaks_at_the_planted_lag() {
    let spec = planted(6, 1, vec![edge(0, 1, 1, 0.3), edge(2, 3, 1, 0.3), edge(4, 5, 1, 0.3)]);
    let panel = gen_planted(&spec, 60, 30).unwrap().panel;
    let sweep = lag_sweep(&panel, 4, &plan(6, 2), 0.01, &RunOptions::default()).unwrap();
    assert_eq!(sweep.len(), 4);
    assert!(sweep[0].bonferroni_positive >= 3);
    for row in &sweep[1..] {
        assert!(row.bonferroni_positive < sweep[0].bonferroni_positive, "{row:?}");
        assert!(row.bonferroni_positive <= row.fdr_positive);
    }
}

#[test]
fn null_lag_sweep_is_nearly_empty() {
    let panel = gen_null(6, 60, 30, 3).unwrap();
    let sweep = lag_sweep(&panel, 3, &plan(6, 4), 0.01, &RunOptions::default()).unwrap();
    let total: usize = sweep
        .iter()
        .map(|r| r.bonferroni_positive + r.bonferroni_negative)
        .sum();
    assert!(total <= 1, "{sweep:?}");
}

#[test]
fn planted_edge_survives_most_segments() {
    let spec = planted(5, 9, vec![edge(1, 3, 1, 0.35)]);
    // 12 lagged rows per day, 4 segments of 25 days each
    let panel = gen_planted(&spec, 100, 30).unwrap().panel;
    let analysis =
        segment_validate(&panel, 1, 300, &plan(5, 5), 0.01, &RunOptions::default()).unwrap();
    assert_eq!(analysis.segments.len(), 4);
    let hits = analysis.occurrences.get(&(1, 3, Sign::Positive)).copied().unwrap_or(0);
    assert!(hits >= 3, "planted edge in {hits} of 4 segments");
    assert!(analysis.union.contains(1, 3, Sign::Positive));
    assert_eq!(analysis.union.params.rows, 300);
}

#[test]
fn repeated_data_gives_identical_segments() {
    let base = gen_planted(&planted(4, 2, vec![edge(0, 2, 1, 0.4)]), 10, 30).unwrap().panel;
    let days = base.days().len();
    let values = ndarray::concatenate(
        ndarray::Axis(0),
        &[base.values().view(), base.values().view(), base.values().view()],
    )
    .unwrap();
    let panel = leadlag_core::returns::ReturnPanel::new(
        base.symbols().to_vec(),
        30,
        leadlag_core::synth::weekdays(3 * days),
        values,
    )
    .unwrap();
    let rows = split_lagged(&base, 1).unwrap().rows();
    let analysis =
        segment_validate(&panel, 1, rows, &plan(4, 8), 0.01, &RunOptions::default()).unwrap();
    assert_eq!(analysis.segments.len(), 3);
    for s in &analysis.segments[1..] {
        assert_eq!(s, &analysis.segments[0]);
    }
    assert_eq!(analysis.union.edge_keys(), analysis.segments[0].edge_keys());
    assert!(analysis.occurrences.values().all(|&k| k == 3));
}

#[test]
fn null_summary_has_small_mean_correlation() {
    let panel = gen_null(20, 100, 15, 6).unwrap();
    let split = split_lagged(&panel, 1).unwrap();
    let row = summarize("null", &panel, &split).unwrap();
    assert_eq!(row.rows, 2500);
    assert!(row.mean_rho.abs() < 0.01, "{row:?}");
    assert!(row.mean_c.abs() < 0.01, "{row:?}");
    // sampling spread of a null coefficient is about 1/sqrt(T)
    let expected = 1.0 / (split.rows() as f64).sqrt();
    assert!((row.sd_c / expected - 1.0).abs() < 0.15, "{row:?}");
}

#[test]
fn coarser_horizons_raise_synchronous_correlation_under_lead_lag() {
    let n = 6;
    let edges = (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| edge(a, b, 1, 0.25)))
        .collect();
    let fine = gen_planted(&planted(n, 4, edges), 40, 5).unwrap().panel;
    let panels: Vec<_> = [5, 15, 30, 65]
        .into_iter()
        .map(|h| if h == 5 { Ok(fine.clone()) } else { fine.coarsen(h) })
        .collect::<Result<_, _>>()
        .unwrap();
    let curve = epps_curve(&panels).unwrap();
    assert_eq!(curve.iter().map(|p| p.h).collect::<Vec<_>>(), [5, 15, 30, 65]);
    for w in curve.windows(2) {
        assert!(w[1].mean > w[0].mean, "{curve:?}");
    }
    assert!(curve.iter().all(|p| (p.se - p.sd / 15f64.sqrt()).abs() < 1e-15));
}

fn lagged_from_ticks(ticks: &[TickRecord], h: u32) -> f64 {
    let mut series: BTreeMap<String, Vec<TickRecord>> = BTreeMap::new();
    for t in ticks {
        series.entry(t.symbol.clone()).or_default().push(t.clone());
    }
    let calendar = SessionCalendar::from_ticks(&series);
    let grid = sample_prices(&series, h, &calendar).unwrap().grid;
    let panel = compute_returns(&grid).unwrap();
    lagged_corr(&split_lagged(&panel, 1).unwrap()).unwrap().get(0, 1)
}

#[test]
fn sparse_trading_attenuates_the_lagged_coefficient() {
    let spec = planted(2, 12, vec![edge(0, 1, 1, 0.6)]);
    let planted = gen_planted(&spec, 80, 15).unwrap();
    let panel = planted.panel;
    let direct = lagged_corr(&split_lagged(&panel, 1).unwrap()).unwrap().get(0, 1);
    let tick_spec = |rate| TickSpec {
        rate,
        start_price: 20.0,
        silent: Vec::new(),
        seed: 3,
    };
    let dense = gen_ticks(&panel, &tick_spec(TradeRate::EverySecond)).unwrap();
    let sparse = gen_ticks(&panel, &tick_spec(TradeRate::Poisson(0.004))).unwrap();
    let c_dense = lagged_from_ticks(&dense, 15);
    let c_sparse = lagged_from_ticks(&sparse, 15);
    assert!((c_dense - direct).abs() < 1e-9, "{c_dense} vs {direct}");
    assert!(c_sparse < c_dense - 0.05, "sparse {c_sparse} vs dense {c_dense}");
}
