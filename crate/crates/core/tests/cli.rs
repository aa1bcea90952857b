use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tgdin::cli::{dispatch, sha256_hex};
use tgdin::config::{validate_config, ParseMode};

const TINY: &str = r#"{
  "regimes": {"trace_len": 60, "calibration_bands": 2, "test_capacities_mbps": [20, 200], "grid_replicates": 1},
  "train": {"traces_per_round": 4, "max_epochs": 2, "hidden": [8, 8, 8]},
  "baselines": {"corpus_traces": 4, "max_epochs": 2, "gru_hidden": 4, "gru_head": 4, "finetune_max_epochs": 1},
  "eval": {"finetune_targets_mbps": [200], "budgets": [0.05]}
}"#;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["tgdin", "--quiet"];
    argv.extend_from_slice(args);
    dispatch(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(p.clone(), std::fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["generate", "grid", "--no-such-flag"]), 2);
    assert_eq!(run(&["train-baseline", "lstm", "--capacity", "20"]), 2);
}

#[test]
fn missing_inputs_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    assert_eq!(run(&["evaluate", "cross-capacity", "--out", s(&out)]), 1);
    let missing = tmp.path().join("nope.json");
    assert_eq!(run(&["infer", "--checkpoint", s(&missing), "--trace", s(&missing), "--out", s(&out)]), 1);
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let c = s(&cfg);

    let grid = root.join("grid");
    assert_eq!(run(&["--config", c, "generate", "grid", "--out", s(&grid)]), 0);
    let traces = grid.join("traces");
    let before = snapshot(&traces);
    assert_eq!(before.len(), 2 * 2 * 6);

    let train = root.join("train");
    assert_eq!(run(&["--config", c, "--seed", "3", "train", "--out", s(&train)]), 0);
    let ck = train.join("checkpoint.json");

    // The snapshot alone reproduces the run.
    let again = root.join("train2");
    assert_eq!(run(&["--config", s(&train.join("config.json")), "train", "--out", s(&again)]), 0);
    assert_eq!(std::fs::read(&ck).unwrap(), std::fs::read(again.join("checkpoint.json")).unwrap());
    let snap = validate_config(&std::fs::read_to_string(train.join("config.json")).unwrap(), ParseMode::Strict).unwrap();
    assert_eq!(snap.seed, 3);

    let base = root.join("base");
    assert_eq!(run(&["--config", c, "train-baseline", "gru-lstm", "--capacity", "60", "--out", s(&base)]), 0);
    let bck = base.join("checkpoint.json");

    let ft = root.join("ft");
    assert_eq!(
        run(&["--config", c, "finetune", "--checkpoint", s(&bck), "--targets", s(&traces), "--target-capacity", "200", "--out", s(&ft)]),
        0
    );
    assert!(ft.join("checkpoint.json").exists());

    let cross = root.join("cross");
    assert_eq!(
        run(&["--config", c, "evaluate", "cross-capacity", "--checkpoint", s(&ck), "--checkpoint", s(&bck), "--traces", s(&traces), "--out", s(&cross)]),
        0
    );
    let csv = std::fs::read_to_string(cross.join("metrics_cross_capacity.csv")).unwrap();
    assert!(csv.contains("gru_lstm(60)") && csv.contains("tgdin"));
    assert!(cross.join("fig_cross_capacity_rmse.svg").exists());

    let study = root.join("study");
    assert_eq!(
        run(&["--config", c, "evaluate", "finetune-study", "--checkpoint", s(&bck), "--tgdin", s(&ck), "--traces", s(&traces), "--out", s(&study)]),
        0
    );
    let csv = std::fs::read_to_string(study.join("metrics_finetune.csv")).unwrap();
    assert!(csv.contains("gru_lstm(60)+5%full") && csv.contains("gru_lstm(60)+5%last"));

    let rep = root.join("report");
    assert_eq!(
        run(&["report", "--metrics", s(&cross.join("metrics_cross_capacity.csv")), "--out", s(&rep)]),
        0
    );
    assert_eq!(
        std::fs::read(rep.join("metrics_cross_capacity.csv")).unwrap(),
        std::fs::read(cross.join("metrics_cross_capacity.csv")).unwrap()
    );

    let first = before.keys().find(|p| p.extension().unwrap() == "csv").unwrap().clone();
    let inf = root.join("infer");
    assert_eq!(run(&["--config", c, "infer", "--checkpoint", s(&ck), "--trace", s(&first), "--out", s(&inf)]), 0);
    let demand = std::fs::read_to_string(inf.join("demand.csv")).unwrap();
    let k = snap.sim.k;
    assert_eq!(demand.lines().count(), 1 + 60 - (k - 1));
    assert!(demand.lines().nth(1).unwrap().starts_with(&format!("{},", k - 1)));

    // Inputs are untouched.
    assert_eq!(snapshot(&traces), before);

    // Manifest hashes describe the files on disk.
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cross.join("manifest.json")).unwrap()).unwrap();
    for a in m["artifacts"].as_array().unwrap() {
        let bytes = std::fs::read(cross.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
}

#[test]
fn ingest_packets_into_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("cap.csv");
    std::fs::write(&p, "ts_s,user_id,size_bytes\n0.05,0,25000\n0.15,0,25000\n0.25,1,50000\n").unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&["ingest", "--packets", s(&p), "--out", s(&out)]), 1, "capacity is required");
    assert_eq!(run(&["ingest", "--packets", s(&p), "--capacity", "20", "--out", s(&out)]), 0);
    let t = tgdin::ingest::read_trace_csv(&out.join("cap.csv"), ParseMode::Strict).unwrap();
    assert_eq!(t.len(), 2);
    assert!((t.windows[0].users[0].throughput_mbps - 2.0).abs() < 1e-12);
    assert!((t.windows[1].users[1].throughput_mbps - 2.0).abs() < 1e-12);
    assert!(!t.has_truth);

    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "ts_s,user_id,size_bytes\n0.1,7,100\n").unwrap();
    assert_eq!(run(&["ingest", "--packets", s(&bad), "--capacity", "20", "--out", s(&out)]), 1);
}
