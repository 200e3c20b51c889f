use std::fs;
use std::path::Path;
use std::time::Duration;

use leadlag_core::corr::CorrKind;
use leadlag_core::permengine::{Engine, PermData, PermMode, PermPlan, RunOptions};
use leadlag_core::pipeline::{cmd_synth, cmd_validate, load_panels, RunConfig, SynthRequest};
use leadlag_core::returns::split_lagged;
use leadlag_core::validate::{Method, ValidatedNetwork};

fn null_returns(dir: &Path, n: usize) -> std::path::PathBuf {
    let path = dir.join("r.csv");
    cmd_synth(&SynthRequest::Null { n, days: 15, h: 30, seed: 2 }, &path).unwrap();
    path
}

fn config(returns: &Path, output: &Path) -> RunConfig {
    RunConfig {
        returns: Some(returns.to_path_buf()),
        horizons: vec![30],
        k: 100,
        seed: 11,
        output: output.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn toml_config_round_trip_and_rejections() {
    let cfg = RunConfig::from_toml_str(
        "returns = \"r.csv\"\nhorizons = [5, 15]\nmode = \"sync\"\nmethods = [\"fdr\"]\nseed = 3\n",
    )
    .unwrap();
    assert_eq!(cfg.mode, CorrKind::Synchronous);
    assert_eq!(cfg.methods, vec![Method::Fdr]);
    assert_eq!(cfg.horizons, vec![5, 15]);
    assert!(RunConfig::from_toml_str("mystery = 1").is_err());
    assert!(RunConfig::from_toml_str("mode = \"diagonal\"").is_err());
}

#[test]
fn runtime_settings_do_not_change_the_config_hash() {
    let a = RunConfig::default();
    let b = RunConfig {
        workers: 7,
        checkpoint_secs: Some(30),
        resume: true,
        output: "elsewhere".into(),
        ..RunConfig::default()
    };
    let c = RunConfig {
        seed: 1,
        ..RunConfig::default()
    };
    assert_eq!(a.provenance("validate").config_hash, b.provenance("validate").config_hash);
    assert_ne!(a.provenance("validate").config_hash, c.provenance("validate").config_hash);
    assert_eq!(a.provenance("validate").config_hash.len(), 16);
}

#[test]
fn synchronous_networks_are_undirected_upper_triangles() {
    let dir = tempfile::tempdir().unwrap();
    let returns = null_returns(dir.path(), 5);
    let cfg = RunConfig {
        mode: CorrKind::Synchronous,
        q0: 0.5,
        methods: vec![Method::Bonferroni, Method::Fdr, Method::Analytic],
        ..config(&returns, &dir.path().join("out"))
    };
    cmd_validate(&cfg).unwrap();
    for m in ["bonferroni", "fdr", "analytic"] {
        let text = fs::read_to_string(dir.path().join(format!("out/h30_sync/{m}.json"))).unwrap();
        let net = ValidatedNetwork::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert!(!net.directed);
        assert!(net.edges.iter().all(|e| e.source < e.target), "{m}");
    }
}

#[test]
fn resuming_from_a_partial_checkpoint_reproduces_the_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let returns = null_returns(dir.path(), 6);
    let fresh = config(&returns, &dir.path().join("fresh"));
    cmd_validate(&fresh).unwrap();

    // a checkpoint taken part way through the same plan
    let panel = &load_panels(&fresh).unwrap()[0];
    let split = split_lagged(panel, 1).unwrap();
    let engine = Engine::new(PermData::Lagged(&split)).unwrap();
    let plan = PermPlan::new(fresh.replicates_for(6), 11, PermMode::LaggedRowShuffle).unwrap();
    let mut partial = None;
    let opts = RunOptions {
        workers: 1,
        checkpoint_every: Some(Duration::ZERO),
    };
    engine
        .run_resumable(&plan, &opts, None, |cp| {
            if partial.is_none() {
                let mut buf = Vec::new();
                cp.write_to(&mut buf).unwrap();
                partial = Some(buf);
            }
            Ok(())
        })
        .unwrap();
    let resumed_dir = dir.path().join("resumed");
    fs::create_dir_all(resumed_dir.join("h30_l1")).unwrap();
    fs::write(resumed_dir.join("h30_l1/counts.ckpt"), partial.unwrap()).unwrap();
    let resumed = RunConfig {
        resume: true,
        ..config(&returns, &resumed_dir)
    };
    cmd_validate(&resumed).unwrap();
    for f in ["h30_l1/counts.json", "h30_l1/bonferroni.csv", "h30_l1/fdr.graphml", "run.json"] {
        assert_eq!(
            fs::read(dir.path().join("fresh").join(f)).unwrap(),
            fs::read(resumed_dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn failed_runs_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let returns = dir.path().join("r.csv");
    fs::write(&returns, "date,slot,A,B\n2024-01-02,0,0.1,oops\n").unwrap();
    let cfg = config(&returns, &dir.path().join("out"));
    let err = cmd_validate(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join("out").exists());
}
