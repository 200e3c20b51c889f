mod common;

use std::time::{Duration, Instant};

use leadlag_core::permengine::{Checkpoint, Engine, PermData, PermMode, PermPlan, RunOptions};
use leadlag_core::returns::split_lagged;
use leadlag_core::synth::gen_null;
use ndarray::{Array2, Axis};

fn opts(workers: usize) -> RunOptions {
    RunOptions {
        workers,
        checkpoint_every: None,
    }
}

#[test]
fn null_pvalues_pool_to_uniform() {
    let (n, seeds, q) = (10, 20u64, 10_000u64);
    let mut pvalues = Vec::new();
    for seed in 0..seeds {
        let panel = gen_null(n, 500, 78, 300 + seed).unwrap();
        let split = split_lagged(&panel, 1).unwrap();
        assert_eq!(split.rows(), 2000);
        let plan = PermPlan::new(q, seed, PermMode::LaggedRowShuffle).unwrap();
        let counts = Engine::new(PermData::Lagged(&split)).unwrap().run(&plan, &opts(0)).unwrap();
        pvalues.extend(counts.up.iter().map(|&u| u as f64 / q as f64));
    }
    pvalues.sort_by(f64::total_cmp);
    let len = pvalues.len() as f64;
    let ks = pvalues
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - i as f64 / len).abs().max(((i + 1) as f64 / len - p).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "KS distance {ks}");
}

#[test]
fn joint_row_relabeling_leaves_counts_in_distribution() {
    let mut rng = common::rng(3);
    let (t, n, q) = (300, 4, 20_000u64);
    let leader = common::gaussian(t, n, &mut rng);
    let follower = &leader.slice(ndarray::s![.., ..]) * 0.3 + common::gaussian(t, n, &mut rng);
    let sigma: Vec<usize> = (0..t).map(|i| (i * 7 + 3) % t).collect();
    let a = common::split_from(leader.clone(), follower.clone());
    let b = common::split_from(leader.select(Axis(0), &sigma), follower.select(Axis(0), &sigma));
    let plan = PermPlan::new(q, 1, PermMode::LaggedRowShuffle).unwrap();
    let ca = Engine::new(PermData::Lagged(&a)).unwrap().run(&plan, &opts(0)).unwrap();
    let plan_b = PermPlan::new(q, 2, PermMode::LaggedRowShuffle).unwrap();
    let cb = Engine::new(PermData::Lagged(&b)).unwrap().run(&plan_b, &opts(0)).unwrap();
    for (x, y) in ca.up.iter().zip(cb.up.iter()) {
        let (px, py) = (*x as f64 / q as f64, *y as f64 / q as f64);
        let p = (px + py) / 2.0;
        let se = (2.0 * p * (1.0 - p) / q as f64).sqrt().max(1.0 / q as f64);
        assert!((px - py).abs() <= 5.0 * se, "{px} vs {py}");
    }
}

#[test]
fn symbol_relabeling_permutes_counts() {
    let mut rng = common::rng(4);
    let (t, n) = (200, 5);
    let leader = common::gaussian(t, n, &mut rng);
    let follower = common::gaussian(t, n, &mut rng);
    let order = [3usize, 0, 4, 1, 2];
    let a = common::split_from(leader.clone(), follower.clone());
    let b = common::split_from(leader.select(Axis(1), &order), follower.select(Axis(1), &order));
    let plan = PermPlan::new(3000, 9, PermMode::LaggedRowShuffle).unwrap();
    let ca = Engine::new(PermData::Lagged(&a)).unwrap().run(&plan, &opts(0)).unwrap();
    let cb = Engine::new(PermData::Lagged(&b)).unwrap().run(&plan, &opts(0)).unwrap();
    for i in 0..n {
        for j in 0..n {
            assert_eq!(cb.up[[i, j]], ca.up[[order[i], order[j]]]);
            assert_eq!(cb.down[[i, j]], ca.down[[order[i], order[j]]]);
        }
    }
}

#[test]
fn sync_diagonal_is_a_tie_and_counts_are_symmetric() {
    let panel = gen_null(4, 20, 30, 5).unwrap();
    let plan = PermPlan::new(500, 3, PermMode::SyncColumnShuffle).unwrap();
    let counts = Engine::new(PermData::Sync(&panel)).unwrap().run(&plan, &opts(2)).unwrap();
    for i in 0..4 {
        assert_eq!(counts.up[[i, i]], 500);
        assert_eq!(counts.down[[i, i]], 500);
    }
    let wrong = PermPlan::new(500, 3, PermMode::LaggedRowShuffle).unwrap();
    assert!(Engine::new(PermData::Sync(&panel)).unwrap().run(&wrong, &opts(0)).is_err());
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let panel = gen_null(6, 40, 30, 8).unwrap();
    let split = split_lagged(&panel, 1).unwrap();
    let engine = Engine::new(PermData::Lagged(&split)).unwrap();
    let plan = PermPlan::new(10_000, 17, PermMode::LaggedRowShuffle).unwrap();
    let full = engine.run(&plan, &opts(0)).unwrap();

    let mut first = None;
    let every = RunOptions {
        workers: 2,
        checkpoint_every: Some(Duration::ZERO),
    };
    engine
        .run_resumable(&plan, &every, None, |cp| {
            if first.is_none() {
                let mut buf = Vec::new();
                cp.write_to(&mut buf).unwrap();
                first = Some(buf);
            }
            Ok(())
        })
        .unwrap();
    let cp = Checkpoint::read_from(first.expect("a checkpoint was taken").as_slice()).unwrap();
    assert!(cp.done > 0 && cp.done < cp.total);
    let resumed = engine.run_resumable(&plan, &opts(3), Some(cp.clone()), |_| Ok(())).unwrap();
    assert_eq!(resumed, full);

    let other = PermPlan::new(10_000, 18, PermMode::LaggedRowShuffle).unwrap();
    assert!(engine.run_resumable(&other, &opts(0), Some(cp), |_| Ok(())).is_err());
}

fn best_of<F: FnMut()>(rounds: usize, mut f: F) -> Duration {
    (0..rounds)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn replicate_throughput_tracks_a_dense_product() {
    let mut rng = common::rng(10);
    let (t, n, reps) = (2000, 30, 400u64);
    let leader = common::gaussian(t, n, &mut rng);
    let follower = common::gaussian(t, n, &mut rng);
    let split = common::split_from(leader.clone(), follower.clone());
    let engine = Engine::new(PermData::Lagged(&split)).unwrap();
    let plan = PermPlan::new(reps, 1, PermMode::LaggedRowShuffle).unwrap();
    let engine_time = best_of(3, || {
        engine.run(&plan, &opts(1)).unwrap();
    });
    let mut sink = 0.0;
    let product_time = best_of(3, || {
        for _ in 0..reps {
            let c: Array2<f64> = leader.t().dot(&follower);
            sink += c[[0, 0]];
        }
    });
    assert!(sink.is_finite());
    let ratio = engine_time.as_secs_f64() / product_time.as_secs_f64();
    assert!(ratio < 4.0, "engine {engine_time:?} vs products {product_time:?} ({ratio:.2}x)");
}
